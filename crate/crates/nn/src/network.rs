use rand::Rng;

use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerCache, LayerSpec, Mode, Param};
use crate::matrix::Matrix;

/// A feed-forward stack of layers applied to a whole sequence at once.
#[derive(Clone, Debug)]
pub struct Network {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

/// Activations recorded by [`Network::forward_train`], consumed by
/// [`Network::backward`].
#[derive(Debug)]
pub struct Tape {
    caches: Vec<LayerCache>,
    frames: usize,
    input_dim: usize,
}

impl Network {
    pub fn new<R: Rng>(input_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if input_dim == 0 {
            return Err(NnError::Config("network input dimension is 0".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut dim = input_dim;
        for spec in specs {
            layers.push(Layer::build(spec, dim, rng)?);
            dim = spec.output_dim(dim);
        }
        Ok(Self {
            specs: specs.to_vec(),
            layers,
            input_dim,
            output_dim: dim,
        })
    }

    /// Scalar parameters a network built from `specs` would hold, computed
    /// without allocating; `None` on arithmetic overflow.
    pub fn parameter_count(input_dim: usize, specs: &[LayerSpec]) -> Option<usize> {
        let mut dim = input_dim;
        let mut total = 0usize;
        for spec in specs {
            let lstm = |h: usize| -> Option<usize> {
                let gates = h.checked_mul(4)?;
                gates.checked_mul(dim.checked_add(h)?.checked_add(1)?)
            };
            let n = match *spec {
                LayerSpec::Dense { units } => units.checked_mul(dim.checked_add(1)?)?,
                LayerSpec::LayerNorm => dim.checked_mul(2)?,
                LayerSpec::Lstm { hidden } => lstm(hidden)?,
                LayerSpec::Blstm { hidden } => lstm(hidden)?.checked_mul(2)?,
                _ => 0,
            };
            total = total.checked_add(n)?;
            dim = match *spec {
                LayerSpec::Blstm { hidden } => hidden.checked_mul(2)?,
                _ => spec.output_dim(dim),
            };
        }
        Some(total)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Snapshot of every parameter tensor, in [`Network::params`] order.
    pub fn parameter_values(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    pub fn load_parameter_values(&mut self, values: &[Vec<f64>]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(NnError::Shape(format!(
                "network has {} parameter tensors, got {}",
                params.len(),
                values.len()
            )));
        }
        for (i, (p, v)) in params.iter_mut().zip(values).enumerate() {
            if p.value.len() != v.len() {
                return Err(NnError::Shape(format!(
                    "parameter tensor {i} holds {} values, got {}",
                    p.value.len(),
                    v.len()
                )));
            }
            p.value.copy_from_slice(v);
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(NnError::Shape(format!(
                "network expects {} input features, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Inference pass: dropout is the identity and nothing is cached.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward::<rand_chacha::ChaCha8Rng>(&h, Mode::Eval, None, false).0;
        }
        Ok(h)
    }

    /// Forward pass that records activations for [`Network::backward`].
    /// Dropout masks are drawn from `rng` when `mode` is [`Mode::Train`].
    pub fn forward_with_tape<R: Rng>(&self, x: &Matrix, mode: Mode, rng: &mut R) -> Result<(Matrix, Tape)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&h, mode, Some(&mut *rng), true);
            caches.push(cache.expect("cache requested"));
            h = y;
        }
        Ok((
            h,
            Tape {
                caches,
                frames: x.rows(),
                input_dim: x.cols(),
            },
        ))
    }

    pub fn forward_train<R: Rng>(&self, x: &Matrix, rng: &mut R) -> Result<(Matrix, Tape)> {
        self.forward_with_tape(x, Mode::Train, rng)
    }

    /// Reverse-mode pass. Parameter gradients are accumulated (not
    /// overwritten); the gradient with respect to the input is returned.
    pub fn backward(&mut self, tape: &Tape, grad_out: &Matrix) -> Result<Matrix> {
        if tape.caches.len() != self.layers.len() || tape.input_dim != self.input_dim {
            return Err(NnError::TapeMismatch(format!(
                "tape has {} layers over {} inputs, network has {} over {}",
                tape.caches.len(),
                tape.input_dim,
                self.layers.len(),
                self.input_dim
            )));
        }
        if grad_out.shape() != (tape.frames, self.output_dim) {
            return Err(NnError::Shape(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                tape.frames,
                self.output_dim
            )));
        }
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches).rev() {
            g = layer.backward(cache, &g)?;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn parameter_count_matches_construction() {
        let specs = [
            LayerSpec::Dense { units: 7 },
            LayerSpec::LayerNorm,
            LayerSpec::Blstm { hidden: 3 },
            LayerSpec::Lstm { hidden: 2 },
            LayerSpec::Dense { units: 4 },
            LayerSpec::LogSoftmax,
        ];
        let net = Network::new(5, &specs, &mut rng()).unwrap();
        assert_eq!(Network::parameter_count(5, &specs), Some(net.num_parameters()));
        assert_eq!(
            Network::parameter_count(usize::MAX, &[LayerSpec::Dense { units: 2 }]),
            None
        );
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let mut net = Network::new(3, &[LayerSpec::Dense { units: 3 }], &mut rng()).unwrap();
        if let Layer::Dense(d) = &mut net.layers_mut()[0] {
            d.weight.value = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        }
        let x = Matrix::from_fn(4, 3, |r, c| r as f64 - c as f64 * 0.5);
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn dense_weight_gradient_is_outer_product() {
        let mut net = Network::new(2, &[LayerSpec::Dense { units: 3 }], &mut rng()).unwrap();
        let x = Matrix::from_rows(&[[0.5, -2.0]]).unwrap();
        let (_, tape) = net.forward_train(&x, &mut rng()).unwrap();
        let g = Matrix::from_rows(&[[1.0, 2.0, -1.0]]).unwrap();
        net.backward(&tape, &g).unwrap();
        let w = &net.params()[0].grad;
        assert_eq!(w, &vec![0.5, -2.0, 1.0, -4.0, -0.5, 2.0]);
    }

    #[test]
    fn relu_blocks_gradient_for_negative_input() {
        let mut net = Network::new(3, &[LayerSpec::Relu], &mut rng()).unwrap();
        let x = Matrix::from_rows(&[[-1.0, 0.5, -0.1]]).unwrap();
        let (_, tape) = net.forward_train(&x, &mut rng()).unwrap();
        let dx = net.backward(&tape, &Matrix::filled(1, 3, 1.0)).unwrap();
        assert_eq!(dx.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let net = Network::new(5, &[LayerSpec::Dense { units: 4 }, LayerSpec::LogSoftmax], &mut rng()).unwrap();
        let x = Matrix::from_fn(6, 5, |r, c| ((r * 5 + c) as f64).cos() * 3.0);
        let y = net.forward(&x).unwrap();
        for row in y.iter_rows() {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let net = Network::new(4, &[LayerSpec::Dropout { p: 0.5 }], &mut rng()).unwrap();
        let x = Matrix::from_fn(3, 4, |r, c| (r + c) as f64);
        assert_eq!(net.forward(&x).unwrap(), x);
        let (y, _) = net.forward_with_tape(&x, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(y, x);
        let (y, _) = net.forward_train(&Matrix::filled(50, 4, 1.0), &mut rng()).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(y.as_slice().iter().any(|&v| v == 0.0));
    }

    #[test]
    fn blstm_output_concatenates_directions() {
        let net = Network::new(3, &[LayerSpec::Blstm { hidden: 2 }], &mut rng()).unwrap();
        assert_eq!(net.output_dim(), 4);
        let y = net.forward(&Matrix::filled(5, 3, 0.3)).unwrap();
        assert_eq!(y.shape(), (5, 4));
    }

    #[test]
    fn wrong_input_width_and_foreign_tape_are_errors() {
        let mut a = Network::new(3, &[LayerSpec::Dense { units: 2 }], &mut rng()).unwrap();
        assert!(a.forward(&Matrix::zeros(2, 4)).is_err());
        let b = Network::new(3, &[LayerSpec::Relu, LayerSpec::Tanh], &mut rng()).unwrap();
        let (_, tape) = b.forward_train(&Matrix::zeros(2, 3), &mut rng()).unwrap();
        assert!(matches!(
            a.backward(&tape, &Matrix::zeros(2, 2)),
            Err(NnError::TapeMismatch(_))
        ));
    }
}
