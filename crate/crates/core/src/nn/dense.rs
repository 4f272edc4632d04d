use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        self.input * self.output + self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    spec: LayerSpec,
    /// Start of this layer's weights in the flat parameter vector. The
    /// `input x output` row-major weight block is followed by the bias.
    offset: usize,
}

/// Fully connected feedforward network with all parameters stored in one
/// flat vector, so optimizers and checkpoints see a single contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Activations recorded by [`DenseNet::forward_trace`]; `activations[0]` is
/// the input, `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Trace {
    batch: usize,
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Aligned with [`DenseNet::params`].
    pub params: Vec<f64>,
    /// Same shape as the forward input, as `(batch, input_dim)`.
    pub input: Tensor,
}

fn matmul(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    beta: f64,
    c: &mut [f64],
) -> Result<(), NnError> {
    let (m, n) = (a.nrows(), b.ncols());
    let mut c = ArrayViewMut2::from_shape((m, n), c)
        .map_err(|e| NnError::Shape(format!("matmul output: {e}")))?;
    general_mat_mul(1.0, &a, &b, beta, &mut c);
    Ok(())
}

fn view(rows: usize, cols: usize, data: &[f64]) -> Result<ArrayView2<'_, f64>, NnError> {
    ArrayView2::from_shape((rows, cols), data).map_err(|e| NnError::Shape(e.to_string()))
}

impl DenseNet {
    /// Builds a zero-initialised net. `layers` lists `(width, activation)` per layer.
    pub fn zeros(input_dim: usize, layers: &[(usize, Activation)]) -> Result<Self, NnError> {
        if input_dim == 0 {
            return Err(NnError::Config("input dimension must be positive".into()));
        }
        if layers.is_empty() {
            return Err(NnError::Config("a net needs at least one layer".into()));
        }
        let mut specs = Vec::with_capacity(layers.len());
        let mut prev = input_dim;
        for &(width, activation) in layers {
            if width == 0 {
                return Err(NnError::Config("layer widths must be positive".into()));
            }
            specs.push(LayerSpec {
                input: prev,
                output: width,
                activation,
            });
            prev = width;
        }
        let count = specs.iter().map(LayerSpec::param_count).sum();
        Self::from_parameters(specs, vec![0.0; count])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        layers: &[(usize, Activation)],
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(input_dim, layers)?;
        for layer in &net.layers {
            let LayerSpec { input, output, .. } = layer.spec;
            let bound = (6.0 / (input + output) as f64).sqrt();
            for w in &mut net.params[layer.offset..layer.offset + input * output] {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    /// Reassembles a net from layer specs and a flat parameter vector.
    pub fn from_parameters(specs: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self, NnError> {
        if specs.is_empty() {
            return Err(NnError::Config("a net needs at least one layer".into()));
        }
        for pair in specs.windows(2) {
            if pair[0].output != pair[1].input {
                return Err(NnError::Shape(format!(
                    "layer output {} does not chain into layer input {}",
                    pair[0].output, pair[1].input
                )));
            }
        }
        let mut offset = 0;
        let layers = specs
            .into_iter()
            .map(|spec| {
                let layer = Layer { spec, offset };
                offset += spec.param_count();
                layer
            })
            .collect::<Vec<_>>();
        if offset != params.len() {
            return Err(NnError::Shape(format!(
                "layers need {offset} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::NonFinite("parameters".into()));
        }
        Ok(Self { layers, params })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output
    }

    pub fn layer_specs(&self) -> impl Iterator<Item = LayerSpec> + '_ {
        self.layers.iter().map(|l| l.spec)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Row-major `input x output` weights of layer `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let layer = &self.layers[l];
        &self.params[layer.offset..layer.offset + layer.spec.input * layer.spec.output]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let layer = &self.layers[l];
        let start = layer.offset + layer.spec.input * layer.spec.output;
        &self.params[start..start + layer.spec.output]
    }

    fn check_input(&self, input: &Tensor) -> Result<usize, NnError> {
        let (batch, dim) = input.as_batch()?;
        if dim != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input shape {:?} does not match net input dimension {}",
                input.shape(),
                self.input_dim()
            )));
        }
        Ok(batch)
    }

    /// Output of shape `(batch, output_dim)`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        let trace = self.forward_trace(input)?;
        let batch = trace.batch;
        let out = trace.activations.into_iter().last().unwrap_or_default();
        Tensor::matrix(batch, self.output_dim(), out)
    }

    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace, NnError> {
        let batch = self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.values().to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let LayerSpec {
                input: fan_in,
                output: fan_out,
                activation,
            } = layer.spec;
            let bias = self.bias(l);
            let mut out = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                out.extend_from_slice(bias);
            }
            {
                let x = view(batch, fan_in, &activations[l])?;
                let w = view(fan_in, fan_out, self.weights(l))?;
                matmul(x, w, 1.0, &mut out)?;
            }
            if activation != Activation::Identity {
                for v in &mut out {
                    *v = activation.apply(*v);
                }
            }
            activations.push(out);
        }
        Ok(Trace { batch, activations })
    }

    /// Reverse pass over a recorded trace. `upstream` is dLoss/dOutput.
    pub fn backward(&self, trace: &Trace, upstream: &Tensor) -> Result<Gradients, NnError> {
        let batch = trace.batch;
        let (ub, ud) = upstream.as_batch()?;
        if ub != batch || ud != self.output_dim() {
            return Err(NnError::Shape(format!(
                "upstream gradient shape {:?} does not match output ({batch}, {})",
                upstream.shape(),
                self.output_dim()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.values().to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let LayerSpec {
                input: fan_in,
                output: fan_out,
                activation,
            } = layer.spec;
            if activation != Activation::Identity {
                for (d, &y) in delta.iter_mut().zip(&trace.activations[l + 1]) {
                    *d *= activation.derivative_from_output(y);
                }
            }
            let (gw, gb) = grads[layer.offset..layer.offset + layer.spec.param_count()]
                .split_at_mut(fan_in * fan_out);
            let dz = view(batch, fan_out, &delta)?;
            let x = view(batch, fan_in, &trace.activations[l])?;
            matmul(x.t(), dz, 0.0, gw)?;
            for row in delta.chunks_exact(fan_out) {
                for (b, d) in gb.iter_mut().zip(row) {
                    *b += d;
                }
            }
            let mut dx = vec![0.0; batch * fan_in];
            let w = view(fan_in, fan_out, self.weights(l))?;
            matmul(dz, w.t(), 0.0, &mut dx)?;
            delta = dx;
        }
        Ok(Gradients {
            params: grads,
            input: Tensor::matrix(batch, self.input_dim(), delta)?,
        })
    }

    /// Forward then backward in one call.
    pub fn backprop(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients, NnError> {
        let trace = self.forward_trace(input)?;
        self.backward(&trace, upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = DenseNet::zeros(2, &[(2, Activation::Identity)]).unwrap();
        net.params_mut()[..4].copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let out = net.forward(&Tensor::row(vec![0.3, 0.7])).unwrap();
        assert_eq!(out.values(), &[0.3, 0.7]);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let mut net = DenseNet::zeros(3, &[(2, Activation::Identity)]).unwrap();
        net.params_mut()[6..].copy_from_slice(&[0.25, -1.5]);
        for input in [[0.0, 0.0, 0.0], [1.0, -2.0, 9.0]] {
            let out = net.forward(&Tensor::row(input.to_vec())).unwrap();
            assert_eq!(out.values(), &[0.25, -1.5]);
        }
    }

    #[test]
    fn dimension_mismatch_names_shapes() {
        let net = DenseNet::zeros(3, &[(2, Activation::Tanh)]).unwrap();
        let err = net.forward(&Tensor::row(vec![1.0, 2.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2]") && msg.contains('3'), "{msg}");
        let trace = net.forward_trace(&Tensor::row(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(net.backward(&trace, &Tensor::row(vec![1.0])).is_err());
    }

    #[test]
    fn scalar_chain_rule() {
        let mut net = DenseNet::zeros(1, &[(1, Activation::Identity)]).unwrap();
        net.params_mut()[0] = 3.0;
        let g = net
            .backprop(&Tensor::row(vec![2.0]), &Tensor::row(vec![1.0]))
            .unwrap();
        assert_eq!(g.params, vec![2.0, 1.0]);
        assert_eq!(g.input.values(), &[3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::glorot(3, &[(5, Activation::Tanh), (2, Activation::Identity)], &mut rng)
            .unwrap();
        let g = net
            .backprop(&Tensor::row(vec![0.1, 0.2, 0.3]), &Tensor::zeros(vec![1, 2]))
            .unwrap();
        assert!(g.params.iter().chain(g.input.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_count_and_chaining() {
        let net = DenseNet::zeros(4, &[(8, Activation::Relu), (3, Activation::Identity)]).unwrap();
        assert_eq!(net.param_count(), 4 * 8 + 8 + 8 * 3 + 3);
        let bad = vec![
            LayerSpec { input: 2, output: 3, activation: Activation::Tanh },
            LayerSpec { input: 4, output: 1, activation: Activation::Identity },
        ];
        assert!(DenseNet::from_parameters(bad, vec![0.0; 14]).is_err());
    }

    #[test]
    fn glorot_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::glorot(10, &[(6, Activation::Tanh)], &mut rng).unwrap();
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(net.weights(0).iter().all(|w| w.abs() <= bound));
        assert!(net.bias(0).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn batched_rows_match_single_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = DenseNet::glorot(2, &[(4, Activation::Tanh), (3, Activation::Identity)], &mut rng)
            .unwrap();
        let batch = Tensor::matrix(2, 2, vec![0.1, 0.9, -0.4, 0.2]).unwrap();
        let out = net.forward(&batch).unwrap();
        for i in 0..2 {
            let single = net.forward(&Tensor::row(batch.row_slice(i).to_vec())).unwrap();
            for (a, b) in single.values().iter().zip(out.row_slice(i)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
