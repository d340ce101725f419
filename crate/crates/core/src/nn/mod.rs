//! Small dense networks with hand-written backward passes, the masked
//! gumbel-softmax used to turn generator logits into programs, and Adam.

mod adam;
mod gumbel;
mod loss;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use gumbel::{gumbel_backward, gumbel_softmax_masked, relaxed_given, GumbelSample};
pub use loss::{cosine_similarity, mean_cosine_similarity, rmse};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("non-finite gradient; update skipped")]
    NonFinite,
    #[error("invalid network: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths from input to output; the activation sits between layers,
/// never after the last one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl NetSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<NetSpec, NnError> {
        let spec = NetSpec { widths, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.widths.len() < 2 {
            return Err(NnError::Spec("need at least an input and an output width".into()));
        }
        if self.widths.contains(&0) {
            return Err(NnError::Spec(format!("widths must be positive, got {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

/// `y = x·W + b` with `W` stored input-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Dense {
        let dist = Normal::new(0.0, (2.0 / input as f64).sqrt()).expect("positive std");
        Dense {
            w: Array2::from_shape_simple_fn((input, output), || dist.sample(rng)),
            b: Array1::zeros(output),
        }
    }

    pub fn input(&self) -> usize {
        self.w.nrows()
    }

    pub fn output(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Forward pass for 0/1 inputs given by their active columns per row.
    pub fn forward_sparse(&self, active: &[Vec<usize>]) -> Array2<f64> {
        let mut out = Array2::zeros((active.len(), self.output()));
        for (mut row, cols) in out.axis_iter_mut(Axis(0)).zip(active) {
            row.assign(&self.b);
            for &c in cols {
                row += &self.w.row(c);
            }
        }
        out
    }

    /// Parameter gradients and the input gradient.
    pub fn backward(&self, x: &ArrayView2<f64>, dy: &ArrayView2<f64>) -> (DenseGrad, Array2<f64>) {
        let g = DenseGrad { w: x.t().dot(dy).as_standard_layout().into_owned(), b: dy.sum_axis(Axis(0)) };
        (g, dy.dot(&self.w.t()))
    }

    pub fn backward_sparse(&self, active: &[Vec<usize>], dy: &ArrayView2<f64>) -> DenseGrad {
        let mut w = Array2::zeros(self.w.raw_dim());
        for (d, cols) in dy.axis_iter(Axis(0)).zip(active) {
            for &c in cols {
                let mut r = w.row_mut(c);
                r += &d;
            }
        }
        DenseGrad { w, b: dy.sum_axis(Axis(0)) }
    }
}

/// Input batch for [`Mlp::forward`].
#[derive(Clone, Copy, Debug)]
pub enum Input<'a> {
    Dense(ArrayView2<'a, f64>),
    /// One row per sample listing the columns that are 1; all others are 0.
    Sparse(&'a [Vec<usize>]),
}

impl Input<'_> {
    fn rows(&self) -> usize {
        match self {
            Input::Dense(x) => x.nrows(),
            Input::Sparse(a) => a.len(),
        }
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    // activations fed into layers 1.. (layer 0 reads the caller's input)
    hidden: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<DenseGrad>,
}

impl MlpGrad {
    pub fn zeros_like(net: &Mlp) -> MlpGrad {
        MlpGrad {
            layers: net
                .layers
                .iter()
                .map(|l| DenseGrad { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.len()) })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: NetSpec,
    layers: Vec<Dense>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    activation: Activation,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    name: String,
    input: usize,
    output: usize,
    /// Row-major `input × output`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Mlp, NnError> {
        spec.validate()?;
        let layers = spec.widths.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        Ok(Mlp { spec, layers })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Mlp, NnError> {
        if layers.is_empty() {
            return Err(NnError::Spec("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output() != pair[1].input() {
                return Err(NnError::Shape {
                    expected: format!("{} inputs", pair[0].output()),
                    found: format!("{}", pair[1].input()),
                });
            }
        }
        let mut widths = vec![layers[0].input()];
        widths.extend(layers.iter().map(Dense::output));
        Ok(Mlp { spec: NetSpec::new(widths, activation)?, layers })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    fn check_input(&self, x: &Input<'_>) -> Result<(), NnError> {
        let d = self.spec.input();
        let ok = match x {
            Input::Dense(v) => v.ncols() == d,
            Input::Sparse(a) => a.iter().flatten().all(|&c| c < d),
        };
        if ok {
            Ok(())
        } else {
            Err(NnError::Shape { expected: format!("{d} input columns"), found: "other".into() })
        }
    }

    pub fn forward(&self, x: Input<'_>) -> Result<Trace, NnError> {
        self.check_input(&x)?;
        let act = self.spec.activation;
        let mut hidden = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut z = match x {
            Input::Dense(v) => self.layers[0].forward(&v),
            Input::Sparse(a) => self.layers[0].forward_sparse(a),
        };
        for layer in &self.layers[1..] {
            let h = z.mapv(|v| act.apply(v));
            let next = layer.forward(&h.view());
            pre.push(z);
            hidden.push(h);
            z = next;
        }
        Ok(Trace { hidden, pre, output: z })
    }

    pub fn predict(&self, x: Input<'_>) -> Result<Array2<f64>, NnError> {
        Ok(self.forward(x)?.output)
    }

    /// Gradients of `Σ dout ⊙ output` with respect to all parameters and,
    /// for dense input, the input.
    pub fn backward(
        &self,
        x: Input<'_>,
        trace: &Trace,
        dout: &ArrayView2<f64>,
    ) -> Result<(MlpGrad, Option<Array2<f64>>), NnError> {
        if dout.dim() != trace.output.dim() || x.rows() != dout.nrows() {
            return Err(NnError::Shape {
                expected: format!("{:?}", trace.output.dim()),
                found: format!("{:?}", dout.dim()),
            });
        }
        let act = self.spec.activation;
        let n = self.layers.len();
        let mut grads: Vec<Option<DenseGrad>> = vec![None; n];
        let mut dz = dout.to_owned();
        for k in (1..n).rev() {
            let (g, dh) = self.layers[k].backward(&trace.hidden[k - 1].view(), &dz.view());
            grads[k] = Some(g);
            let z = &trace.pre[k - 1];
            dz = dh;
            dz.zip_mut_with(z, |d, &zv| *d *= act.derivative(zv));
        }
        let dx = match x {
            Input::Dense(v) => {
                let (g, dx) = self.layers[0].backward(&v, &dz.view());
                grads[0] = Some(g);
                Some(dx)
            }
            Input::Sparse(a) => {
                grads[0] = Some(self.layers[0].backward_sparse(a, &dz.view()));
                None
            }
        };
        Ok((MlpGrad { layers: grads.into_iter().map(|g| g.expect("filled")).collect() }, dx))
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// One optimizer update; on a non-finite gradient nothing changes.
    pub fn apply(&mut self, opt: &mut Adam, grads: &MlpGrad) -> Result<(), NnError> {
        let g = grads.tensors();
        opt.step(&mut self.tensors_mut(), &g)
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            activation: self.spec.activation,
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(k, l)| LayerRecord {
                    name: format!("dense{k}"),
                    input: l.input(),
                    output: l.output(),
                    weights: l.w.iter().copied().collect(),
                    bias: l.b.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Mlp, NnError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        let layers = ck
            .layers
            .into_iter()
            .map(|r| {
                let w = Array2::from_shape_vec((r.input, r.output), r.weights).map_err(|_| NnError::Shape {
                    expected: format!("{}×{} weights for {}", r.input, r.output, r.name),
                    found: "other".into(),
                })?;
                if r.bias.len() != r.output {
                    return Err(NnError::Shape {
                        expected: format!("{} biases for {}", r.output, r.name),
                        found: r.bias.len().to_string(),
                    });
                }
                Ok(Dense { w, b: Array1::from(r.bias) })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Mlp::from_layers(layers, ck.activation)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mlp, NnError> {
        Mlp::from_json(&fs::read_to_string(path)?)
    }
}

/// A differentiable scorer of flattened `D × S` program matrices.
pub trait Surrogate {
    fn input_dim(&self) -> usize;

    /// One score per row of `x`.
    fn score(&self, x: &ArrayView2<f64>) -> Array1<f64>;

    /// Scores and `∂score_b/∂x_b` for every row.
    fn score_and_grad(&self, x: &ArrayView2<f64>) -> (Array1<f64>, Array2<f64>);
}

impl Surrogate for Mlp {
    fn input_dim(&self) -> usize {
        self.spec.input()
    }

    fn score(&self, x: &ArrayView2<f64>) -> Array1<f64> {
        let out = self.predict(Input::Dense(*x)).expect("surrogate input width");
        out.column(0).to_owned()
    }

    fn score_and_grad(&self, x: &ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
        let trace = self.forward(Input::Dense(*x)).expect("surrogate input width");
        let ones = Array2::ones(trace.output.raw_dim());
        let (_, dx) = self.backward(Input::Dense(*x), &trace, &ones.view()).expect("shapes match");
        (trace.output.column(0).to_owned(), dx.expect("dense input"))
    }
}

/// Linear scorer `x · weights + bias`; handy as a fixed, smooth landscape.
#[derive(Clone, Debug)]
pub struct LinearSurrogate {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl Surrogate for LinearSurrogate {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, x: &ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.weights) + self.bias
    }

    fn score_and_grad(&self, x: &ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
        let g = self.weights.view().insert_axis(Axis(0)).broadcast(x.raw_dim()).expect("row broadcast").to_owned();
        (self.score(x), g)
    }
}

/// Row-major flattening of a `D × S` matrix into the network input layout.
pub fn flatten(m: &ArrayView2<f64>) -> Array1<f64> {
    m.iter().copied().collect()
}

/// Active input columns of a one-hot program given its per-column rows.
pub fn active_columns(indices: &[usize], max_len: usize) -> Vec<usize> {
    indices.iter().enumerate().map(|(s, &d)| d * max_len + s).collect()
}

pub fn is_finite(v: &ArrayView1<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
