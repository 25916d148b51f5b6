use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected layer computing `W·x + b`, `W` shaped `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Dense feed-forward network: hidden layers share one activation, the last layer has its own.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    hidden: Activation,
    output: Activation,
}

/// Per-layer outputs of a batched forward pass, kept for backpropagation.
///
/// `activations[0]` is the input batch; `activations[i + 1]` is the output of layer `i`.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    activations: Vec<Array2<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn output(&self) -> &Array2<T> {
        self.activations.last().expect("cache holds at least the input")
    }
}

/// Gradients shaped like the parameters of an [`Mlp`], summed over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
    /// Gradient with respect to the network input, one row per sample.
    pub input: Option<Array2<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn flatten(&self) -> Vec<T> {
        flatten_layers(&self.layers)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn flatten_layers<T: Real>(layers: &[Dense<T>]) -> Vec<T> {
    let n = layers.iter().map(Dense::n_params).sum();
    let mut out = Vec::with_capacity(n);
    for l in layers {
        out.extend(l.weights.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

impl<T: Real> Mlp<T> {
    /// All-zero network with the given layer widths, e.g. `[15, 128, 128, 3]`.
    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("an mlp needs at least input and output widths"));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let layers = dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers, hidden, output })
    }

    /// Uniform initialization in `±1/√fan_in` for every weight and bias.
    pub fn new_random(dims: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(dims, hidden, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.in_dim() as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Dense<T>>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an mlp needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::invalid(format!(
                    "layer {} expects input width {} but layer {} outputs {}",
                    i + 1,
                    pair[1].in_dim(),
                    i,
                    pair[0].out_dim()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::DimensionMismatch {
                    what: "bias length",
                    expected: l.out_dim(),
                    actual: l.bias.len(),
                });
            }
        }
        Ok(Self { layers, hidden, output })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths including the input, e.g. `[15, 128, 128, 3]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    /// Parameters in storage order: per layer, weights row-major then biases.
    pub fn flatten(&self) -> Vec<T> {
        flatten_layers(&self.layers)
    }

    pub fn unflatten(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                what: "flat parameter vector",
                expected: self.n_params(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked above");
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_batch(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, i: usize, x: &ArrayView2<T>) -> Array2<T> {
        let l = &self.layers[i];
        let mut z = x.dot(&l.weights.t());
        z += &l.bias;
        let act = self.activation_of(i);
        if act != Activation::Identity {
            z.mapv_inplace(|v| act.apply(v));
        }
        z
    }

    /// Forward pass for one sample.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        Ok(self.forward_batch(x)?.into_iter().collect())
    }

    /// Forward pass for a batch, one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_batch(&x)?;
        let mut h = self.layer_forward(0, &x);
        for i in 1..self.layers.len() {
            h = self.layer_forward(i, &h.view());
        }
        Ok(h)
    }

    /// Forward pass that keeps every layer output for a following backward pass.
    pub fn forward_cached(&self, x: ArrayView2<T>) -> Result<ForwardCache<T>> {
        self.check_batch(&x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for i in 0..self.layers.len() {
            let next = self.layer_forward(i, &activations[i].view());
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Reverse pass for the scalar `Σ_rows upstream·output`.
    ///
    /// Returns parameter gradients summed over the batch and, when `want_input` is set,
    /// the per-row gradient with respect to the input.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache<T>,
        upstream: ArrayView2<T>,
        want_input: bool,
    ) -> Result<Gradients<T>> {
        self.backprop(cache, upstream, true, want_input)
    }

    /// Input gradient only; parameter gradients are skipped.
    pub fn input_gradient_batch(&self, cache: &ForwardCache<T>, upstream: ArrayView2<T>) -> Result<Array2<T>> {
        let g = self.backprop(cache, upstream, false, true)?;
        Ok(g.input.expect("input gradient requested"))
    }

    fn backprop(
        &self,
        cache: &ForwardCache<T>,
        upstream: ArrayView2<T>,
        want_params: bool,
        want_input: bool,
    ) -> Result<Gradients<T>> {
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::DimensionMismatch {
                what: "upstream gradient",
                expected: out.len(),
                actual: upstream.len(),
            });
        }
        let n = self.layers.len();
        let mut grads: Vec<Dense<T>> = if want_params {
            self.layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim(), l.out_dim()))
                .collect()
        } else {
            Vec::new()
        };

        // delta = dL/dz for the current layer
        let mut delta = upstream.to_owned();
        for i in (0..n).rev() {
            let act = self.activation_of(i);
            if act != Activation::Identity {
                Zip::from(&mut delta)
                    .and(&cache.activations[i + 1])
                    .for_each(|d, &y| *d = *d * act.derivative_from_output(y));
            }
            if want_params {
                grads[i].weights = delta.t().dot(&cache.activations[i]);
                grads[i].bias = delta.sum_axis(Axis(0));
            }
            if i > 0 || want_input {
                delta = delta.dot(&self.layers[i].weights);
            }
        }
        Ok(Gradients {
            layers: grads,
            input: want_input.then_some(delta),
        })
    }

    /// Single-sample reverse pass; see [`Mlp::backward_batch`].
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<Gradients<T>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "upstream gradient",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice");
        let cache = self.forward_cached(x)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).expect("contiguous slice");
        self.backward_batch(&cache, up, true)
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                weights: l.weights.mapv(|v| U::lit(v.as_f64())),
                bias: l.bias.mapv(|v| U::lit(v.as_f64())),
            })
            .collect();
        Mlp {
            layers,
            hidden: self.hidden,
            output: self.output,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(w: f64, b: f64) -> Mlp<f64> {
        Mlp::from_layers(
            vec![Dense {
                weights: array![[w]],
                bias: array![b],
            }],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[4, 8, 2], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_forward() {
        assert_eq!(linear(2.0, 1.0).forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn linear_backward() {
        let g = linear(2.0, 1.0).backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(g.layers[0].weights[[0, 0]], 3.0);
        assert_eq!(g.layers[0].bias[0], 1.0);
        assert_eq!(g.input.unwrap()[[0, 0]], 2.0);
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::<f64>::new_random(&[5, 7, 3], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let g = net.backward(&[0.1, 0.2, -0.3, 0.4, 0.5], &[0.0; 3]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(g.input.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatches_rejected() {
        let net = Mlp::<f64>::zeros(&[4, 8, 2], Activation::Relu, Activation::Identity).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[0.0; 4], &[1.0]).is_err());
        assert!(Mlp::<f64>::zeros(&[4], Activation::Relu, Activation::Identity).is_err());
    }

    #[test]
    fn tanh_output_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::<f64>::new_random(&[15, 128, 128, 3], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..15).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(net.forward(&x).unwrap().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn batch_matches_single_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f64>::new_random(&[6, 10, 10, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 6), |(i, j)| ((i * 7 + j) as f64).sin());
        let batch = net.forward_batch(x.view()).unwrap();
        for (row, out) in x.rows().into_iter().zip(batch.rows()) {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            for (a, b) in single.iter().zip(out.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn initialization_is_seeded_and_bounded() {
        let dims = [15, 128, 128, 3];
        let a = Mlp::<f64>::new_random(&dims, Activation::Relu, Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = Mlp::<f64>::new_random(&dims, Activation::Relu, Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_params(), 15 * 128 + 128 + 128 * 128 + 128 + 128 * 3 + 3);
        for l in a.layers() {
            let bound = 1.0 / (l.in_dim() as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn f32_network_runs() {
        let net = Mlp::<f32>::zeros(&[2, 3, 1], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![0.0f32]);
    }

    proptest! {
        #[test]
        fn flatten_roundtrip(seed in 0u64..10_000, h in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = Mlp::<f64>::new_random(&[3, h, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
            let v: Vec<f64> = (0..net.n_params()).map(|_| rng.random_range(-5.0..5.0)).collect();
            net.unflatten(&v).unwrap();
            prop_assert_eq!(net.flatten(), v);
        }

        #[test]
        fn forward_is_pure(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::<f64>::new_random(&[4, 9, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = net.forward(&x).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
