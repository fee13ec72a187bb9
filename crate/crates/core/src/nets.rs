//! Per-view networks: stacked GRUs for longitudinal views and dense
//! feed-forward stacks for cross-sectional views, with exact hand-rolled
//! backpropagation.
//!
//! One GRU step with input `x(t)` and previous hidden state `h(t-1)`:
//!
//! ```text
//! u(t) = sigmoid(Wux x(t) + Wuh h(t-1) + bu)          update gate
//! r(t) = sigmoid(Wrx x(t) + Wrh h(t-1) + br)          reset gate
//! c(t) = tanh(Wcx x(t) + Wch (r(t) .* h(t-1)) + bc)   candidate state
//! h(t) = (1 - u(t)) .* h(t-1) + u(t) .* c(t)
//! ```
//!
//! A stacked GRU feeds layer l's full hidden-state sequence to layer l+1; the
//! network output for a subject is the last time step's hidden state of the
//! top layer. Activations are fixed (sigmoid gates, tanh candidate) so the
//! gradient oracles stay stable.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::ViewTensor;
use crate::error::{Error, Result};

/// Hidden-layer activation for dense stacks; the output layer is linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Architecture of one per-view network. Dense layer sizes are hidden/output
/// widths; the input width is inferred from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NetSpec {
    Dense {
        layers: Vec<usize>,
        #[serde(default)]
        activation: Activation,
    },
    Gru {
        hidden: usize,
        layers: usize,
    },
}

impl NetSpec {
    pub fn output_dim(&self) -> usize {
        match self {
            NetSpec::Dense { layers, .. } => *layers.last().unwrap_or(&0),
            NetSpec::Gru { hidden, .. } => *hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NetSpec::Dense { layers, .. } => {
                if layers.is_empty() || layers.contains(&0) {
                    return Err(Error::Config(
                        "dense layer widths must be non-empty and positive".into(),
                    ));
                }
            }
            NetSpec::Gru { hidden, layers } => {
                if *hidden == 0 || *layers == 0 {
                    return Err(Error::Config(
                        "GRU hidden size and layer count must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub w_update_x: DMatrix<f64>,
    pub w_update_h: DMatrix<f64>,
    pub w_reset_x: DMatrix<f64>,
    pub w_reset_h: DMatrix<f64>,
    pub w_cand_x: DMatrix<f64>,
    pub w_cand_h: DMatrix<f64>,
    pub b_update: DVector<f64>,
    pub b_reset: DVector<f64>,
    pub b_cand: DVector<f64>,
}

impl GruLayerParams {
    pub fn input_dim(&self) -> usize {
        self.w_update_x.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_update_x.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub layers: Vec<GruLayerParams>,
}

/// A per-view network with its trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Dense(DenseParams),
    Gru(GruParams),
}

/// Uniform(-s, s) with s = 1 / sqrt(fan_in); biases zero.
fn init_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let s = 1.0 / (cols as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-s..s))
}

/// Build a network with freshly initialized parameters.
pub fn init_network(spec: &NetSpec, input_dim: usize, rng: &mut impl Rng) -> Result<Network> {
    spec.validate()?;
    if input_dim == 0 {
        return Err(Error::Config("network input dimension must be positive".into()));
    }
    match spec {
        NetSpec::Dense { layers, activation } => {
            let mut built = Vec::with_capacity(layers.len());
            let mut fan_in = input_dim;
            for &width in layers {
                built.push(DenseLayer {
                    weights: init_matrix(width, fan_in, rng),
                    bias: DVector::zeros(width),
                });
                fan_in = width;
            }
            Ok(Network::Dense(DenseParams {
                layers: built,
                activation: *activation,
            }))
        }
        NetSpec::Gru { hidden, layers } => {
            let mut built = Vec::with_capacity(*layers);
            let mut fan_in = input_dim;
            for _ in 0..*layers {
                built.push(GruLayerParams {
                    w_update_x: init_matrix(*hidden, fan_in, rng),
                    w_update_h: init_matrix(*hidden, *hidden, rng),
                    w_reset_x: init_matrix(*hidden, fan_in, rng),
                    w_reset_h: init_matrix(*hidden, *hidden, rng),
                    w_cand_x: init_matrix(*hidden, fan_in, rng),
                    w_cand_h: init_matrix(*hidden, *hidden, rng),
                    b_update: DVector::zeros(*hidden),
                    b_reset: DVector::zeros(*hidden),
                    b_cand: DVector::zeros(*hidden),
                });
                fan_in = *hidden;
            }
            Ok(Network::Gru(GruParams { layers: built }))
        }
    }
}

/// Forward-pass record for one GRU layer over one sample's sequence.
#[derive(Debug, Clone)]
struct GruLayerTrace {
    /// Layer input sequence x(1..T), each input_dim.
    inputs: Vec<DVector<f64>>,
    /// Hidden states h(0..T); h(0) = 0.
    hidden: Vec<DVector<f64>>,
    update: Vec<DVector<f64>>,
    reset: Vec<DVector<f64>>,
    candidate: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
struct GruSampleTrace {
    layers: Vec<GruLayerTrace>,
}

/// Opaque forward-pass record consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache(CacheInner);

#[derive(Debug, Clone)]
enum CacheInner {
    Dense {
        /// Input to each layer, first entry is the data matrix (p x N).
        inputs: Vec<DMatrix<f64>>,
        /// Pre-activations per layer.
        preacts: Vec<DMatrix<f64>>,
    },
    Gru {
        samples: Vec<GruSampleTrace>,
    },
}

/// Network output `H` (o x N) plus the cache needed for backprop.
#[derive(Debug)]
pub struct NetOutput {
    pub values: DMatrix<f64>,
    pub cache: ForwardCache,
}

/// Parameter gradients, same shapes as the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub enum NetGrads {
    Dense(DenseParams),
    Gru(GruParams),
}

fn gru_layer_forward(
    params: &GruLayerParams,
    inputs: Vec<DVector<f64>>,
) -> Result<GruLayerTrace> {
    let h_dim = params.hidden_dim();
    let t_len = inputs.len();
    let mut hidden = Vec::with_capacity(t_len + 1);
    hidden.push(DVector::zeros(h_dim));
    let mut update = Vec::with_capacity(t_len);
    let mut reset = Vec::with_capacity(t_len);
    let mut candidate = Vec::with_capacity(t_len);
    for x in &inputs {
        let h_prev = hidden.last().unwrap();
        let u = (&params.w_update_x * x + &params.w_update_h * h_prev + &params.b_update)
            .map(sigmoid);
        let r =
            (&params.w_reset_x * x + &params.w_reset_h * h_prev + &params.b_reset).map(sigmoid);
        let gated = r.component_mul(h_prev);
        let c = (&params.w_cand_x * x + &params.w_cand_h * gated + &params.b_cand)
            .map(f64::tanh);
        let h = h_prev.component_mul(&u.map(|v| 1.0 - v)) + c.component_mul(&u);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "GRU hidden state".into(),
            });
        }
        update.push(u);
        reset.push(r);
        candidate.push(c);
        hidden.push(h);
    }
    Ok(GruLayerTrace {
        inputs,
        hidden,
        update,
        reset,
        candidate,
    })
}

/// Run one sample's sequence (columns of `sequence` are time steps) through
/// the stacked GRU; returns the top layer's final hidden state and the trace.
pub fn gru_forward_sample(
    params: &GruParams,
    sequence: &DMatrix<f64>,
) -> Result<(DVector<f64>, GruSampleCache)> {
    if sequence.ncols() == 0 {
        return Err(Error::InvalidInput("empty input sequence".into()));
    }
    if sequence.nrows() != params.layers[0].input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "sequence has {} rows, GRU expects {}",
            sequence.nrows(),
            params.layers[0].input_dim()
        )));
    }
    let mut inputs: Vec<DVector<f64>> = (0..sequence.ncols())
        .map(|t| sequence.column(t).into_owned())
        .collect();
    let mut traces = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let trace = gru_layer_forward(layer, inputs)?;
        inputs = trace.hidden[1..].to_vec();
        traces.push(trace);
    }
    let final_hidden = traces.last().unwrap().hidden.last().unwrap().clone();
    Ok((final_hidden, GruSampleCache(GruSampleTrace { layers: traces })))
}

/// Single-sample trace wrapper so callers outside the module can hold one.
#[derive(Debug, Clone)]
pub struct GruSampleCache(GruSampleTrace);

/// Backprop through one layer's sequence. `grad_hidden[t]` is dL/dh(t+1)
/// (1-based time); returns gradients for the layer inputs.
fn gru_layer_backward(
    params: &GruLayerParams,
    trace: &GruLayerTrace,
    grad_hidden: &[DVector<f64>],
    grads: &mut GruLayerParams,
) -> Vec<DVector<f64>> {
    let t_len = trace.inputs.len();
    let h_dim = params.hidden_dim();
    let mut input_grads = vec![DVector::<f64>::zeros(params.input_dim()); t_len];
    let mut carry = DVector::<f64>::zeros(h_dim);
    for t in (0..t_len).rev() {
        let gh = &carry + &grad_hidden[t];
        let h_prev = &trace.hidden[t];
        let u = &trace.update[t];
        let r = &trace.reset[t];
        let c = &trace.candidate[t];
        let x = &trace.inputs[t];

        // h(t) = (1-u) .* h(t-1) + u .* c
        let grad_u = gh.component_mul(&(c - h_prev));
        let grad_c = gh.component_mul(u);
        let mut grad_h_prev = gh.component_mul(&u.map(|v| 1.0 - v));

        // candidate: c = tanh(a_c), a_c = Wcx x + Wch (r .* h_prev) + bc
        let grad_ac = grad_c.component_mul(&c.map(|v| 1.0 - v * v));
        grads.w_cand_x += &grad_ac * x.transpose();
        let gated = r.component_mul(h_prev);
        grads.w_cand_h += &grad_ac * gated.transpose();
        grads.b_cand += &grad_ac;
        let grad_gated = params.w_cand_h.transpose() * &grad_ac;
        let grad_r = grad_gated.component_mul(h_prev);
        grad_h_prev += grad_gated.component_mul(r);

        // update gate: u = sigmoid(a_u)
        let grad_au = grad_u.component_mul(&u.map(|v| v * (1.0 - v)));
        grads.w_update_x += &grad_au * x.transpose();
        grads.w_update_h += &grad_au * h_prev.transpose();
        grads.b_update += &grad_au;
        grad_h_prev += params.w_update_h.transpose() * &grad_au;

        // reset gate: r = sigmoid(a_r)
        let grad_ar = grad_r.component_mul(&r.map(|v| v * (1.0 - v)));
        grads.w_reset_x += &grad_ar * x.transpose();
        grads.w_reset_h += &grad_ar * h_prev.transpose();
        grads.b_reset += &grad_ar;
        grad_h_prev += params.w_reset_h.transpose() * &grad_ar;

        input_grads[t] = params.w_cand_x.transpose() * &grad_ac
            + params.w_update_x.transpose() * &grad_au
            + params.w_reset_x.transpose() * &grad_ar;
        carry = grad_h_prev;
    }
    input_grads
}

fn zeros_like_gru_layer(p: &GruLayerParams) -> GruLayerParams {
    GruLayerParams {
        w_update_x: DMatrix::zeros(p.w_update_x.nrows(), p.w_update_x.ncols()),
        w_update_h: DMatrix::zeros(p.w_update_h.nrows(), p.w_update_h.ncols()),
        w_reset_x: DMatrix::zeros(p.w_reset_x.nrows(), p.w_reset_x.ncols()),
        w_reset_h: DMatrix::zeros(p.w_reset_h.nrows(), p.w_reset_h.ncols()),
        w_cand_x: DMatrix::zeros(p.w_cand_x.nrows(), p.w_cand_x.ncols()),
        w_cand_h: DMatrix::zeros(p.w_cand_h.nrows(), p.w_cand_h.ncols()),
        b_update: DVector::zeros(p.b_update.len()),
        b_reset: DVector::zeros(p.b_reset.len()),
        b_cand: DVector::zeros(p.b_cand.len()),
    }
}

impl Network {
    pub fn output_dim(&self) -> usize {
        match self {
            Network::Dense(d) => d.layers.last().map_or(0, |l| l.weights.nrows()),
            Network::Gru(g) => g.layers.last().map_or(0, |l| l.hidden_dim()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Network::Dense(d) => d.layers.first().map_or(0, |l| l.weights.ncols()),
            Network::Gru(g) => g.layers.first().map_or(0, |l| l.input_dim()),
        }
    }

    /// Forward a whole view: one output column per subject.
    pub fn forward_view(&self, view: &ViewTensor) -> Result<NetOutput> {
        let (n, p, t) = view.values().dim();
        match self {
            Network::Dense(_) => {
                if t != 1 {
                    return Err(Error::ShapeMismatch(
                        "dense network expects a cross-sectional view (t = 1)".into(),
                    ));
                }
                let input = DMatrix::from_fn(p, n, |vi, si| view.values()[(si, vi, 0)]);
                self.forward_matrix(&input)
            }
            Network::Gru(_) => {
                if t < 1 {
                    return Err(Error::InvalidInput("empty time axis".into()));
                }
                let sequences: Vec<DMatrix<f64>> = (0..n)
                    .map(|si| DMatrix::from_fn(p, t, |vi, ti| view.values()[(si, vi, ti)]))
                    .collect();
                self.forward_sequences(&sequences)
            }
        }
    }

    /// Dense forward on a `p x N` matrix (columns are samples).
    pub fn forward_matrix(&self, input: &DMatrix<f64>) -> Result<NetOutput> {
        let Network::Dense(params) = self else {
            return Err(Error::InvalidInput(
                "forward_matrix is only defined for dense networks".into(),
            ));
        };
        if input.nrows() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} rows, network expects {}",
                input.nrows(),
                self.input_dim()
            )));
        }
        let n_layers = params.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut preacts = Vec::with_capacity(n_layers);
        let mut current = input.clone();
        for (li, layer) in params.layers.iter().enumerate() {
            let mut z = &layer.weights * &current;
            for col in 0..z.ncols() {
                for row in 0..z.nrows() {
                    z[(row, col)] += layer.bias[row];
                }
            }
            inputs.push(current);
            preacts.push(z.clone());
            current = if li + 1 < n_layers {
                z.map(|v| params.activation.apply(v))
            } else {
                z
            };
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dense network output".into(),
            });
        }
        Ok(NetOutput {
            values: current,
            cache: ForwardCache(CacheInner::Dense { inputs, preacts }),
        })
    }

    /// GRU forward on per-sample sequences (each `p x T`).
    pub fn forward_sequences(&self, sequences: &[DMatrix<f64>]) -> Result<NetOutput> {
        let Network::Gru(params) = self else {
            return Err(Error::InvalidInput(
                "forward_sequences is only defined for GRU networks".into(),
            ));
        };
        let n = sequences.len();
        let mut values = DMatrix::<f64>::zeros(self.output_dim(), n);
        let mut samples = Vec::with_capacity(n);
        for (si, seq) in sequences.iter().enumerate() {
            let (h, cache) = gru_forward_sample(params, seq)?;
            values.set_column(si, &h);
            samples.push(cache.0);
        }
        Ok(NetOutput {
            values,
            cache: ForwardCache(CacheInner::Gru { samples }),
        })
    }

    /// Exact gradients of `<grad_output, H>` with respect to every parameter
    /// and to the network input.
    ///
    /// The input gradient comes back as one `p x N` matrix for dense networks
    /// and one `p x T` matrix per sample for GRUs.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &DMatrix<f64>,
    ) -> Result<(NetGrads, Vec<DMatrix<f64>>)> {
        match (self, &cache.0) {
            (Network::Dense(params), CacheInner::Dense { inputs, preacts }) => {
                if inputs.len() != params.layers.len() {
                    return Err(Error::InvalidInput(
                        "stale cache: layer count mismatch".into(),
                    ));
                }
                if grad_output.nrows() != self.output_dim()
                    || grad_output.ncols() != inputs[0].ncols()
                {
                    return Err(Error::ShapeMismatch(format!(
                        "grad_output is {} x {}, expected {} x {}",
                        grad_output.nrows(),
                        grad_output.ncols(),
                        self.output_dim(),
                        inputs[0].ncols()
                    )));
                }
                let n_layers = params.layers.len();
                let mut grads: Vec<DenseLayer> = params
                    .layers
                    .iter()
                    .map(|l| DenseLayer {
                        weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                        bias: DVector::zeros(l.bias.len()),
                    })
                    .collect();
                let mut delta = grad_output.clone();
                for li in (0..n_layers).rev() {
                    if li + 1 < n_layers {
                        // chain through the hidden activation
                        let z = &preacts[li];
                        delta = DMatrix::from_fn(delta.nrows(), delta.ncols(), |r, c| {
                            delta[(r, c)] * params.activation.derivative(z[(r, c)])
                        });
                    }
                    grads[li].weights = &delta * inputs[li].transpose();
                    grads[li].bias = DVector::from_fn(delta.nrows(), |r, _| delta.row(r).sum());
                    delta = params.layers[li].weights.transpose() * delta;
                }
                let input_grads = vec![delta];
                Ok((
                    NetGrads::Dense(DenseParams {
                        layers: grads,
                        activation: params.activation,
                    }),
                    input_grads,
                ))
            }
            (Network::Gru(params), CacheInner::Gru { samples }) => {
                if grad_output.ncols() != samples.len()
                    || grad_output.nrows() != self.output_dim()
                {
                    return Err(Error::ShapeMismatch(format!(
                        "grad_output is {} x {}, expected {} x {}",
                        grad_output.nrows(),
                        grad_output.ncols(),
                        self.output_dim(),
                        samples.len()
                    )));
                }
                let mut grads: Vec<GruLayerParams> =
                    params.layers.iter().map(zeros_like_gru_layer).collect();
                let mut input_grads = Vec::with_capacity(samples.len());
                for (si, trace) in samples.iter().enumerate() {
                    let t_len = trace.layers[0].inputs.len();
                    // top layer: gradient lands on the final hidden state only
                    let mut grad_seq =
                        vec![DVector::<f64>::zeros(self.output_dim()); t_len];
                    grad_seq[t_len - 1] = grad_output.column(si).into_owned();
                    for li in (0..params.layers.len()).rev() {
                        grad_seq = gru_layer_backward(
                            &params.layers[li],
                            &trace.layers[li],
                            &grad_seq,
                            &mut grads[li],
                        );
                    }
                    let p = params.layers[0].input_dim();
                    let mut g = DMatrix::<f64>::zeros(p, t_len);
                    for (t, col) in grad_seq.iter().enumerate() {
                        g.set_column(t, col);
                    }
                    input_grads.push(g);
                }
                Ok((NetGrads::Gru(GruParams { layers: grads }), input_grads))
            }
            _ => Err(Error::InvalidInput(
                "cache does not match network kind".into(),
            )),
        }
    }

    /// Gradient-ascent step: `theta += lr * grad`.
    pub fn ascend(&mut self, grads: &NetGrads, lr: f64) -> Result<()> {
        match (self, grads) {
            (Network::Dense(p), NetGrads::Dense(g)) => {
                if p.layers.len() != g.layers.len() {
                    return Err(Error::ShapeMismatch("gradient layer count".into()));
                }
                for (l, gl) in p.layers.iter_mut().zip(&g.layers) {
                    l.weights += &gl.weights * lr;
                    l.bias += &gl.bias * lr;
                }
                Ok(())
            }
            (Network::Gru(p), NetGrads::Gru(g)) => {
                if p.layers.len() != g.layers.len() {
                    return Err(Error::ShapeMismatch("gradient layer count".into()));
                }
                for (l, gl) in p.layers.iter_mut().zip(&g.layers) {
                    l.w_update_x += &gl.w_update_x * lr;
                    l.w_update_h += &gl.w_update_h * lr;
                    l.w_reset_x += &gl.w_reset_x * lr;
                    l.w_reset_h += &gl.w_reset_h * lr;
                    l.w_cand_x += &gl.w_cand_x * lr;
                    l.w_cand_h += &gl.w_cand_h * lr;
                    l.b_update += &gl.b_update * lr;
                    l.b_reset += &gl.b_reset * lr;
                    l.b_cand += &gl.b_cand * lr;
                }
                Ok(())
            }
            _ => Err(Error::InvalidInput("gradient does not match network kind".into())),
        }
    }

    /// Visit every parameter in a fixed order. Used by the checkpoint writer
    /// and the finite-difference tests.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        match self {
            Network::Dense(p) => {
                for l in &mut p.layers {
                    l.weights.iter_mut().for_each(&mut f);
                    l.bias.iter_mut().for_each(&mut f);
                }
            }
            Network::Gru(p) => {
                for l in &mut p.layers {
                    for m in [
                        &mut l.w_update_x,
                        &mut l.w_update_h,
                        &mut l.w_reset_x,
                        &mut l.w_reset_h,
                        &mut l.w_cand_x,
                        &mut l.w_cand_h,
                    ] {
                        m.iter_mut().for_each(&mut f);
                    }
                    for v in [&mut l.b_update, &mut l.b_reset, &mut l.b_cand] {
                        v.iter_mut().for_each(&mut f);
                    }
                }
            }
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut clone = self.clone();
        clone.for_each_param_mut(|v| out.push(*v));
        out
    }

    pub fn grads_flat(grads: &NetGrads) -> Vec<f64> {
        let mut net = match grads {
            NetGrads::Dense(p) => Network::Dense(p.clone()),
            NetGrads::Gru(p) => Network::Gru(p.clone()),
        };
        let mut out = Vec::new();
        net.for_each_param_mut(|v| out.push(*v));
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        self.for_each_param_mut(|v| {
            *v = flat[i];
            i += 1;
        });
        debug_assert_eq!(i, flat.len());
    }

    /// Shape manifest mirrored in the checkpoint JSON.
    fn shape_manifest(&self) -> serde_json::Value {
        match self {
            Network::Dense(p) => serde_json::json!({
                "kind": "dense",
                "activation": p.activation,
                "layers": p.layers.iter().map(|l| {
                    serde_json::json!({
                        "weights": [l.weights.nrows(), l.weights.ncols()],
                        "bias": l.bias.len(),
                    })
                }).collect::<Vec<_>>(),
            }),
            Network::Gru(p) => serde_json::json!({
                "kind": "gru",
                "layers": p.layers.iter().map(|l| {
                    serde_json::json!({
                        "input_dim": l.input_dim(),
                        "hidden_dim": l.hidden_dim(),
                    })
                }).collect::<Vec<_>>(),
            }),
        }
    }

    /// Write `<base>.bin` (flat little-endian f64) and `<base>.json` (shapes).
    pub fn save_checkpoint(&self, base: &Path) -> Result<()> {
        let bin_path = base.with_extension("bin");
        let json_path = base.with_extension("json");
        let flat = self.params_flat();
        let mut bytes = Vec::with_capacity(flat.len() * 8);
        for v in &flat {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(&bin_path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(&bin_path, e))?;
        let manifest = serde_json::json!({
            "format": "f64-le",
            "count": flat.len(),
            "net": self.shape_manifest(),
        });
        std::fs::write(&json_path, serde_json::to_string_pretty(&manifest).unwrap())
            .map_err(|e| Error::io(&json_path, e))?;
        Ok(())
    }

    /// Read parameters from `<base>.bin` into a network that already has the
    /// right architecture.
    pub fn load_checkpoint_into(&mut self, base: &Path) -> Result<()> {
        let bin_path = base.with_extension("bin");
        let mut bytes = Vec::new();
        std::fs::File::open(&bin_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&bin_path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::InvalidInput(format!(
                "checkpoint {} is not a multiple of 8 bytes",
                bin_path.display()
            )));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if flat.len() != self.params_flat().len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} parameters, network has {}",
                flat.len(),
                self.params_flat().len()
            )));
        }
        self.set_params_flat(&flat);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_gru(layers: usize, input: usize, hidden: usize, value: f64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = init_network(
            &NetSpec::Gru {
                hidden,
                layers,
            },
            input,
            &mut rng,
        )
        .unwrap();
        net.for_each_param_mut(|v| *v = value);
        net
    }

    #[test]
    fn gru_single_step_hand_computation() {
        // scalar GRU, all weights 1, biases 0, input 1, one step
        let mut net = constant_gru(1, 1, 1, 1.0);
        if let Network::Gru(p) = &mut net {
            p.layers[0].b_update.fill(0.0);
            p.layers[0].b_reset.fill(0.0);
            p.layers[0].b_cand.fill(0.0);
        }
        let seq = DMatrix::from_row_slice(1, 1, &[1.0]);
        let out = net.forward_sequences(&[seq]).unwrap();
        let u = sigmoid(1.0);
        let c = 1.0f64.tanh();
        let expected = u * c;
        assert_abs_diff_eq!(out.values[(0, 0)], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(out.values[(0, 0)], 0.5568, epsilon = 1e-4);
    }

    #[test]
    fn gru_blocked_update_gate_keeps_zero_state() {
        // b_update = -1e6 forces u ~ 0, so h stays at h(0) = 0 for any input.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = init_network(&NetSpec::Gru { hidden: 3, layers: 1 }, 2, &mut rng).unwrap();
        if let Network::Gru(p) = &mut net {
            p.layers[0].b_update.fill(-1e6);
        }
        let seq = DMatrix::from_fn(2, 5, |_, _| rng.gen::<f64>() * 10.0);
        let out = net.forward_sequences(&[seq]).unwrap();
        for v in out.values.iter() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn gru_all_zero_parameters_fix_point() {
        let net = constant_gru(2, 3, 4, 0.0);
        let seq = DMatrix::from_fn(3, 6, |r, c| (r + c) as f64);
        let out = net.forward_sequences(&[seq]).unwrap();
        for v in out.values.iter() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn dense_identity_and_zero_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = init_network(
            &NetSpec::Dense {
                layers: vec![2],
                activation: Activation::Relu,
            },
            2,
            &mut rng,
        )
        .unwrap();
        if let Network::Dense(p) = &mut net {
            p.layers[0].weights = DMatrix::identity(2, 2);
            p.layers[0].bias.fill(0.0);
        }
        let input = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.0, 4.0, 5.0, -6.0]);
        let out = net.forward_matrix(&input).unwrap();
        assert_eq!(out.values, input);

        let mut zero = net.clone();
        zero.for_each_param_mut(|v| *v = 0.0);
        let out = zero.forward_matrix(&input).unwrap();
        assert!(out.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dense_forward_matches_manual_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = init_network(
            &NetSpec::Dense {
                layers: vec![4, 3, 2],
                activation: Activation::Tanh,
            },
            5,
            &mut rng,
        )
        .unwrap();
        let input = DMatrix::from_fn(5, 2, |_, _| rng.gen::<f64>());
        let out = net.forward_matrix(&input).unwrap();
        let Network::Dense(p) = &net else { unreachable!() };
        let mut cur = input;
        for (li, layer) in p.layers.iter().enumerate() {
            let mut z = &layer.weights * &cur;
            for c in 0..z.ncols() {
                for r in 0..z.nrows() {
                    z[(r, c)] += layer.bias[r];
                }
            }
            cur = if li + 1 < p.layers.len() {
                z.map(|v| v.tanh())
            } else {
                z
            };
        }
        assert_abs_diff_eq!(out.values.norm(), cur.norm(), epsilon = 1e-12);
        assert!((out.values - cur).norm() < 1e-12);
    }

    #[test]
    fn init_is_seeded_and_scaled() {
        let spec = NetSpec::Dense {
            layers: vec![10],
            activation: Activation::Relu,
        };
        let a = init_network(&spec, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_network(&spec, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        // s = 1/sqrt(100) = 0.1
        let flat = a.params_flat();
        let weights = &flat[..1000];
        assert!(weights.iter().all(|w| w.abs() < 0.1));
        // biases zero
        assert!(flat[1000..].iter().all(|b| *b == 0.0));
    }

    #[test]
    fn init_weights_center_near_zero() {
        let spec = NetSpec::Dense {
            layers: vec![100],
            activation: Activation::Relu,
        };
        let net = init_network(&spec, 100, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let flat = net.params_flat();
        let weights = &flat[..10_000];
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        // Uniform(-0.1, 0.1): sd = 0.2/sqrt(12), se of mean over 10^4 draws
        let se = 0.2 / 12f64.sqrt() / (weights.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} vs 3*se {}", 3.0 * se);
    }

    /// Central finite differences of sum(grad_out .* H(theta)).
    fn fd_check(net: &Network, forward: impl Fn(&Network) -> DMatrix<f64>, grad_out: &DMatrix<f64>, analytic: &[f64], tol: f64) {
        let h = 1e-5;
        let base = net.params_flat();
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let mut plus = net.clone();
            let mut flat = base.clone();
            flat[k] += h;
            plus.set_params_flat(&flat);
            let mut minus = net.clone();
            flat[k] = base[k] - h;
            minus.set_params_flat(&flat);
            let f_plus = forward(&plus).component_mul(grad_out).sum();
            let f_minus = forward(&minus).component_mul(grad_out).sum();
            let fd = (f_plus - f_minus) / (2.0 * h);
            let denom = fd.abs().max(analytic[k].abs()).max(1e-8);
            let rel = (fd - analytic[k]).abs() / denom;
            worst = worst.max(rel);
        }
        assert!(worst < tol, "worst relative error {worst}");
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = init_network(&NetSpec::Gru { hidden: 5, layers: 2 }, 3, &mut rng).unwrap();
        let sequences: Vec<DMatrix<f64>> = (0..2)
            .map(|_| DMatrix::from_fn(3, 4, |_, _| rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let grad_out = DMatrix::from_fn(5, 2, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let out = net.forward_sequences(&sequences).unwrap();
        let (grads, _) = net.backward(&out.cache, &grad_out).unwrap();
        let analytic = Network::grads_flat(&grads);
        fd_check(
            &net,
            |n| n.forward_sequences(&sequences).unwrap().values,
            &grad_out,
            &analytic,
            1e-4,
        );
    }

    #[test]
    fn gru_input_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let net = init_network(&NetSpec::Gru { hidden: 4, layers: 1 }, 2, &mut rng).unwrap();
        let seq = DMatrix::from_fn(2, 3, |_, _| rng.gen::<f64>() - 0.5);
        let grad_out = DMatrix::from_fn(4, 1, |_, _| rng.gen::<f64>() - 0.5);
        let out = net.forward_sequences(std::slice::from_ref(&seq)).unwrap();
        let (_, input_grads) = net.backward(&out.cache, &grad_out).unwrap();
        let h = 1e-6;
        for r in 0..2 {
            for c in 0..3 {
                let mut plus = seq.clone();
                plus[(r, c)] += h;
                let mut minus = seq.clone();
                minus[(r, c)] -= h;
                let fp = net
                    .forward_sequences(&[plus])
                    .unwrap()
                    .values
                    .component_mul(&grad_out)
                    .sum();
                let fm = net
                    .forward_sequences(&[minus])
                    .unwrap()
                    .values
                    .component_mul(&grad_out)
                    .sum();
                let fd = (fp - fm) / (2.0 * h);
                assert_abs_diff_eq!(input_grads[0][(r, c)], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = init_network(
            &NetSpec::Dense {
                layers: vec![6, 4, 3],
                activation: Activation::Tanh,
            },
            4,
            &mut rng,
        )
        .unwrap();
        let input = DMatrix::from_fn(4, 3, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let grad_out = DMatrix::from_fn(3, 3, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let out = net.forward_matrix(&input).unwrap();
        let (grads, _) = net.backward(&out.cache, &grad_out).unwrap();
        let analytic = Network::grads_flat(&grads);
        fd_check(
            &net,
            |n| n.forward_matrix(&input).unwrap().values,
            &grad_out,
            &analytic,
            1e-4,
        );
    }

    #[test]
    fn dense_linear_layer_gradient_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = init_network(
            &NetSpec::Dense {
                layers: vec![3],
                activation: Activation::Relu,
            },
            4,
            &mut rng,
        )
        .unwrap();
        let input = DMatrix::from_fn(4, 5, |_, _| rng.gen::<f64>());
        let grad_out = DMatrix::from_fn(3, 5, |_, _| rng.gen::<f64>());
        let out = net.forward_matrix(&input).unwrap();
        let (grads, input_grads) = net.backward(&out.cache, &grad_out).unwrap();
        let NetGrads::Dense(g) = &grads else { unreachable!() };
        let expected = &grad_out * input.transpose();
        assert!((&g.layers[0].weights - expected).norm() < 1e-12);
        let Network::Dense(p) = &net else { unreachable!() };
        let expected_input = p.layers[0].weights.transpose() * &grad_out;
        assert!((&input_grads[0] - expected_input).norm() < 1e-12);
    }

    #[test]
    fn zero_grad_output_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let net = init_network(&NetSpec::Gru { hidden: 3, layers: 2 }, 2, &mut rng).unwrap();
        let seqs = vec![DMatrix::from_fn(2, 4, |_, _| rng.gen::<f64>())];
        let out = net.forward_sequences(&seqs).unwrap();
        let grad_out = DMatrix::zeros(3, 1);
        let (grads, input_grads) = net.backward(&out.cache, &grad_out).unwrap();
        assert!(Network::grads_flat(&grads).iter().all(|v| *v == 0.0));
        assert!(input_grads[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sample_columns_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let net = init_network(&NetSpec::Gru { hidden: 4, layers: 2 }, 3, &mut rng).unwrap();
        let seqs: Vec<DMatrix<f64>> = (0..5)
            .map(|_| DMatrix::from_fn(3, 4, |_, _| rng.gen::<f64>()))
            .collect();
        let out = net.forward_sequences(&seqs).unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<DMatrix<f64>> = perm.iter().map(|&i| seqs[i].clone()).collect();
        let out_perm = net.forward_sequences(&permuted).unwrap();
        for (new_col, &old_col) in perm.iter().enumerate() {
            assert_eq!(
                out_perm.values.column(new_col),
                out.values.column(old_col)
            );
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = init_network(&NetSpec::Gru { hidden: 3, layers: 2 }, 2, &mut rng).unwrap();
        let base = dir.path().join("net");
        net.save_checkpoint(&base).unwrap();
        let mut other = init_network(&NetSpec::Gru { hidden: 3, layers: 2 }, 2, &mut rng).unwrap();
        assert_ne!(net, other);
        other.load_checkpoint_into(&base).unwrap();
        assert_eq!(net, other);
        // manifest exists and names the format
        let manifest = std::fs::read_to_string(base.with_extension("json")).unwrap();
        assert!(manifest.contains("f64-le"));
    }
}
