//! Dense feed-forward networks with batched forward and reverse-mode backward.
//!
//! Weights are stored input-major (`in × out`) so a batch `X` (`n × in`) maps
//! to `X·W + b`.

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Multiplies `grad` by the activation derivative, expressed through the output `y`.
    fn backprop(self, y: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.zip_mut_with(y, |g, &y| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.zip_mut_with(y, |g, &y| *g *= 1.0 - y * y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width followed by every layer's output width.
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    pub fn new(widths: &[usize], hidden: Activation, output: Activation) -> Self {
        Self { widths: widths.to_vec(), hidden, output }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.widths.len() < 2 || self.widths.iter().any(|&w| w == 0) {
            return Err(NetError::InvalidSpec(format!("{:?}", self.widths)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Linear>,
}

/// Activations recorded by [`Mlp::forward_tape`]: `values[0]` is the input,
/// `values[i + 1]` the post-activation output of layer `i`.
#[derive(Debug, Clone)]
pub struct Tape {
    values: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.values.last().expect("tape holds the input")
    }
}

/// Orthogonal matrix of shape `rows × cols` scaled by `gain`.
fn orthogonal<R: Rng>(rng: &mut R, rows: usize, cols: usize, gain: f64) -> Array2<f64> {
    let (r, c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let a = DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let q = qr.q();
    let rdiag = qr.r().diagonal();
    // sign fix makes the distribution uniform over orthogonal matrices
    let mut out = Array2::zeros((rows, cols));
    for i in 0..r {
        for j in 0..c {
            let v = q[(i, j)] * rdiag[j].signum() * gain;
            if rows >= cols {
                out[(i, j)] = v;
            } else {
                out[(j, i)] = v;
            }
        }
    }
    out
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Linear { weight: Array2::zeros((w[0], w[1])), bias: Array1::zeros(w[1]) })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Orthogonal weights (gain `hidden_gain` on hidden layers, `output_gain`
    /// on the last), zero biases.
    pub fn orthogonal<R: Rng>(spec: MlpSpec, rng: &mut R, hidden_gain: f64, output_gain: f64) -> Result<Self, NetError> {
        let mut m = Self::zeros(spec)?;
        let n = m.layers.len();
        for (i, layer) in m.layers.iter_mut().enumerate() {
            let (rows, cols) = layer.weight.dim();
            let gain = if i + 1 == n { output_gain } else { hidden_gain };
            layer.weight = orthogonal(rng, rows, cols, gain);
        }
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.spec.clone()).expect("spec already validated")
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.spec.widths.last().expect("validated")
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.spec.output
        } else {
            self.spec.hidden
        }
    }

    fn check_input(&self, cols: usize) -> Result<(), NetError> {
        if cols != self.input_dim() {
            return Err(NetError::WidthMismatch { expected: self.input_dim(), got: cols });
        }
        Ok(())
    }

    fn layer_forward(&self, i: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let l = &self.layers[i];
        let mut z = x.dot(&l.weight);
        z += &l.bias;
        self.activation(i).apply(&mut z);
        z
    }

    /// Batched forward pass, one sample per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        self.check_input(x.ncols())?;
        let mut h = self.layer_forward(0, &x);
        for i in 1..self.layers.len() {
            h = self.layer_forward(i, &h.view());
        }
        Ok(h)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        Ok(self.forward(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass that keeps every layer output for [`Mlp::backward`].
    pub fn forward_tape(&self, x: Array2<f64>) -> Result<Tape, NetError> {
        self.check_input(x.ncols())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x);
        for i in 0..self.layers.len() {
            let next = self.layer_forward(i, &values[i].view());
            values.push(next);
        }
        Ok(Tape { values })
    }

    /// Accumulates parameter gradients of `Σ grad_out ⊙ output` into `grads`
    /// and returns the gradient with respect to the input when requested.
    pub fn backward(&self, tape: &Tape, grad_out: Array2<f64>, grads: &mut Mlp, want_input: bool) -> Option<Array2<f64>> {
        let mut g = grad_out;
        let n = self.layers.len();
        for i in (0..n).rev() {
            self.activation(i).backprop(&tape.values[i + 1], &mut g);
            let x = &tape.values[i];
            let gl = &mut grads.layers[i];
            general_mat_mul(1.0, &x.t(), &g, 1.0, &mut gl.weight);
            gl.bias += &g.sum_axis(Axis(0));
            if i > 0 || want_input {
                g = g.dot(&self.layers[i].weight.t());
            }
        }
        want_input.then_some(g)
    }

    /// Every parameter tensor as a flat slice, layer by layer (weight, bias).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }
}
