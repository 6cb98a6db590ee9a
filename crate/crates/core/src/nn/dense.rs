//! Dense networks: tanh hidden layers, identity output, manual backprop.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use super::init::orthogonal;
use super::store::TensorStore;
use crate::error::{Error, Result};

/// Gain applied to orthogonally initialized hidden-layer weights.
pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
/// Gain applied to the output layer; small so fresh nets start near zero.
pub const OUTPUT_GAIN: f64 = 0.01;

/// A fully connected network `x -> tanh(..) -> .. -> W_L a + b_L`.
///
/// Weight matrices are `(out, in)`; biases start at zero. Hidden weights are
/// orthogonal with gain `sqrt(2)`, the output layer with gain `0.01`.
#[derive(Debug, Clone)]
pub struct DenseNet {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Per-layer activations recorded by [`DenseNet::forward_trace`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input, `activations[L]` the output.
    pub activations: Vec<Array1<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array1<f64> {
        self.activations.last().expect("trace has at least the input")
    }
}

/// Parameter gradients with the same layout as [`DenseNet`].
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Array1<f64>>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            d_weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            d_biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.d_weights {
            *w *= s;
        }
        for b in &mut self.d_biases {
            *b *= s;
        }
    }

    pub fn add(&mut self, other: &NetGrads) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += b;
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            *a += b;
        }
    }
}

impl DenseNet {
    /// Builds a net with the given layer widths, e.g. `[2, 32, 32, 10]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        Self::with_gains(dims, HIDDEN_GAIN, OUTPUT_GAIN, rng)
    }

    pub fn with_gains<R: Rng + ?Sized>(
        dims: &[usize],
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig("a net needs an input and an output layer".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let n_layers = dims.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let gain = if l + 1 == n_layers { output_gain } else { hidden_gain };
            weights.push(orthogonal(dims[l + 1], dims[l], gain, rng));
            biases.push(Array1::zeros(dims[l + 1]));
        }
        Ok(Self { dims: dims.to_vec(), weights, biases })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &Array2<f64> {
        &self.weights[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Array2<f64> {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Array1<f64> {
        &mut self.biases[layer]
    }

    fn check_input(&self, x: &ArrayView1<f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "net expects input of dim {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Evaluates the network.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let mut trace = self.forward_trace(x)?;
        Ok(trace.activations.pop().expect("trace is non-empty"))
    }

    /// Evaluates the network keeping per-layer activations for backprop.
    pub fn forward_trace(&self, x: ArrayView1<f64>) -> Result<ForwardTrace> {
        self.check_input(&x)?;
        let n_layers = self.n_layers();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(x.to_owned());
        for l in 0..n_layers {
            let mut z = self.weights[l].dot(activations.last().unwrap()) + &self.biases[l];
            if l + 1 < n_layers {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(ForwardTrace { activations })
    }

    /// Accumulates parameter gradients for `upstream^T d(output)/d(params)`
    /// into `grads`, reusing the activations from a forward trace.
    pub fn backprop_trace(
        &self,
        trace: &ForwardTrace,
        upstream: ArrayView1<f64>,
        grads: &mut NetGrads,
    ) -> Result<()> {
        if upstream.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient dim {} does not match output dim {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let n_layers = self.n_layers();
        let mut delta = upstream.to_owned();
        for l in (0..n_layers).rev() {
            let a_prev = &trace.activations[l];
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let mut row = grads.d_weights[l].row_mut(i);
                    row.scaled_add(d, &a_prev.view());
                }
            }
            grads.d_biases[l] += &delta;
            if l > 0 {
                let mut prev = self.weights[l].t().dot(&delta);
                // tanh'(z) = 1 - a^2 using the stored activation.
                let a = &trace.activations[l];
                for (p, &ai) in prev.iter_mut().zip(a.iter()) {
                    *p *= 1.0 - ai * ai;
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// One-shot convenience: forward then backprop from `upstream`.
    pub fn backprop(&self, x: ArrayView1<f64>, upstream: ArrayView1<f64>) -> Result<NetGrads> {
        let trace = self.forward_trace(x)?;
        let mut grads = NetGrads::zeros_like(self);
        self.backprop_trace(&trace, upstream, &mut grads)?;
        Ok(grads)
    }

    // ---- flat parameter interface (shared by Adam and finite differences) ----

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Appends all parameters (per layer: weight row-major, then bias).
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in 0..self.n_layers() {
            out.extend(self.weights[l].iter());
            out.extend(self.biases[l].iter());
        }
    }

    /// Reads parameters back in [`DenseNet::write_flat`] order.
    pub fn read_flat(&mut self, data: &[f64]) -> Result<usize> {
        let mut pos = 0;
        for l in 0..self.n_layers() {
            for w in self.weights[l].iter_mut() {
                *w = *data.get(pos).ok_or_else(|| Error::ShapeMismatch("flat vector too short".into()))?;
                pos += 1;
            }
            for b in self.biases[l].iter_mut() {
                *b = *data.get(pos).ok_or_else(|| Error::ShapeMismatch("flat vector too short".into()))?;
                pos += 1;
            }
        }
        Ok(pos)
    }

    pub fn grads_flat(&self, grads: &NetGrads, out: &mut Vec<f64>) {
        for l in 0..self.n_layers() {
            out.extend(grads.d_weights[l].iter());
            out.extend(grads.d_biases[l].iter());
        }
    }

    // ---- serialization ----

    pub fn save_into(&self, store: &mut TensorStore, prefix: &str) {
        store.insert_meta(format!("{prefix}.dims"), dims_string(&self.dims));
        for l in 0..self.n_layers() {
            store.insert_array2(format!("{prefix}.w{l}"), &self.weights[l]);
            store.insert_array1(format!("{prefix}.b{l}"), &self.biases[l]);
        }
    }

    pub fn load_from(store: &TensorStore, prefix: &str) -> Result<Self> {
        let dims = parse_dims(store.meta(&format!("{prefix}.dims"))?)?;
        let n_layers = dims.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let w = store.get_array2(&format!("{prefix}.w{l}"))?;
            let b = store.get_array1(&format!("{prefix}.b{l}"))?;
            if w.shape() != [dims[l + 1], dims[l]] || b.len() != dims[l + 1] {
                return Err(Error::Checkpoint(format!("tensor shapes for {prefix} do not match its dims header")));
            }
            weights.push(w);
            biases.push(b);
        }
        Ok(Self { dims, weights, biases })
    }
}

fn dims_string(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad dims entry '{t}'"))))
        .collect::<Result<_>>()?;
    if dims.len() < 2 {
        return Err(Error::Parse("dims header needs at least two entries".into()));
    }
    Ok(dims)
}
