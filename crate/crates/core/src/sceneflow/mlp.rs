//! Fully connected flow prior: `R^3 -> R^3`, ReLU between hidden layers,
//! linear output.

use std::fmt::Debug;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{Point3, PointCloud};
use crate::error::{invalid, Result};
use crate::sceneflow::FlowField;

/// Scalar type the prior can be evaluated in.
pub trait Real:
    ndarray::LinalgScalar
    + num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + Send
    + Sync
    + Debug
    + 'static
{
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone)]
struct Dense<F> {
    /// `fan_in x fan_out`
    weight: Array2<F>,
    bias: Array1<F>,
}

/// Network weights. Layer `k` maps `dims[k] -> dims[k+1]`.
#[derive(Debug, Clone)]
pub struct MlpPrior<F: Real = f32> {
    layers: Vec<Dense<F>>,
}

/// Gradient (or any other tensor) with the same shapes as an [`MlpPrior`].
#[derive(Debug, Clone)]
pub struct Gradients<F: Real = f32> {
    pub weights: Vec<Array2<F>>,
    pub biases: Vec<Array1<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(prior: &MlpPrior<F>) -> Self {
        Self {
            weights: prior
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            biases: prior
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    /// Flattened in the same order as [`MlpPrior::parameters`].
    pub fn flatten(&self) -> Vec<F> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct ForwardCache<F> {
    /// `acts[0]` is the input, `acts[k]` the (post-ReLU) output of layer `k-1`,
    /// the last entry the linear network output.
    acts: Vec<Array2<F>>,
}

impl<F: Real> ForwardCache<F> {
    pub(crate) fn output(&self) -> &Array2<F> {
        self.acts.last().unwrap()
    }
}

impl<F: Real> MlpPrior<F> {
    /// `num_layers` linear layers (`3 -> width`, `width -> width` ..., `width -> 3`).
    ///
    /// Hidden weights and biases are drawn from `U(-g/sqrt(fan_in), g/sqrt(fan_in))`;
    /// the output layer starts at zero so the initial flow is identically zero.
    pub fn new(hidden_width: usize, num_layers: usize, init_gain: f64, seed: u64) -> Result<Self> {
        if num_layers < 2 {
            return invalid(format!("need at least 2 layers, got {num_layers}"));
        }
        if hidden_width == 0 {
            return invalid("hidden width must be positive");
        }
        if !(init_gain.is_finite() && init_gain > 0.0) {
            return invalid(format!("init gain must be positive, got {init_gain}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![3];
        dims.extend(std::iter::repeat_n(hidden_width, num_layers - 1));
        dims.push(3);
        let mut layers = Vec::with_capacity(num_layers);
        for k in 0..num_layers {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            if k + 1 == num_layers {
                layers.push(Dense {
                    weight: Array2::zeros((fan_in, fan_out)),
                    bias: Array1::zeros(fan_out),
                });
            } else {
                let bound = init_gain / (fan_in as f64).sqrt();
                let mut draw = || F::of(rng.random_range(-bound..bound));
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), &mut draw);
                let bias = Array1::from_shape_simple_fn(fan_out, &mut draw);
                layers.push(Dense { weight, bias });
            }
        }
        Ok(Self { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn parameters(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    /// Mutable access to the `k`-th parameter in [`parameters`](Self::parameters) order.
    pub fn parameter_mut(&mut self, mut k: usize) -> Option<&mut F> {
        for l in &mut self.layers {
            if k < l.weight.len() {
                let cols = l.weight.ncols();
                return l.weight.get_mut((k / cols, k % cols));
            }
            k -= l.weight.len();
            if k < l.bias.len() {
                return l.bias.get_mut(k);
            }
            k -= l.bias.len();
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    pub(crate) fn input_matrix(cloud: &PointCloud) -> Array2<F> {
        let mut x = Array2::zeros((cloud.len(), 3));
        for (mut row, p) in x.rows_mut().into_iter().zip(cloud.iter()) {
            row[0] = F::of(p.x as f64);
            row[1] = F::of(p.y as f64);
            row[2] = F::of(p.z as f64);
        }
        x
    }

    pub(crate) fn forward_cached(&self, input: Array2<F>) -> ForwardCache<F> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&layer.weight);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            acts.push(z);
        }
        ForwardCache { acts }
    }

    /// Network output for each row of `input` (`N x 3`).
    pub fn forward(&self, input: &Array2<F>) -> Array2<F> {
        let last = self.layers.len() - 1;
        let mut a = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            a = z;
        }
        a
    }

    /// Parameter gradient given `d_output = dL/d(output)` (`N x 3`).
    pub(crate) fn backward(&self, cache: &ForwardCache<F>, d_output: Array2<F>) -> Gradients<F> {
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut dz = d_output;
        for k in (0..n).rev() {
            let a_in = &cache.acts[k];
            weights.push(a_in.t().dot(&dz));
            biases.push(dz.sum_axis(Axis(0)));
            if k > 0 {
                let mut da = dz.dot(&self.layers[k].weight.t());
                // ReLU'(z) via the post-activation value
                ndarray::Zip::from(&mut da)
                    .and(a_in)
                    .for_each(|g, &a| {
                        if a <= F::zero() {
                            *g = F::zero();
                        }
                    });
                dz = da;
            }
        }
        weights.reverse();
        biases.reverse();
        Gradients { weights, biases }
    }

    /// In-place `theta <- theta - step` for a step with matching shapes.
    pub(crate) fn apply_step(&mut self, step: &Gradients<F>) {
        for ((l, w), b) in self.layers.iter_mut().zip(&step.weights).zip(&step.biases) {
            l.weight -= w;
            l.bias -= b;
        }
    }

    /// Evaluates the flow at every point of `cloud`.
    pub fn flow_at(&self, cloud: &PointCloud) -> FlowField {
        let out = self.forward(&Self::input_matrix(cloud));
        out.rows()
            .into_iter()
            .map(|r| Point3::new(r[0].f64() as f32, r[1].f64() as f32, r[2].f64() as f32))
            .collect::<Vec<_>>()
            .into()
    }

    /// Same network with parameters cast to another scalar type.
    pub fn cast<G: Real>(&self) -> MlpPrior<G> {
        MlpPrior {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.mapv(|v| G::of(v.f64())),
                    bias: l.bias.mapv(|v| G::of(v.f64())),
                })
                .collect(),
        }
    }
}
