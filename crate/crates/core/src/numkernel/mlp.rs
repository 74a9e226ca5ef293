use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::{DenseMatrix, Real};
use super::params::ParamSet;
use crate::error::{Error, Result};

/// One affine layer, `y = x W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f32> {
    pub weight: DenseMatrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Multi-layer perceptron: rectifier after every hidden layer, identity on
/// the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T = f32> {
    pub layers: Vec<Layer<T>>,
}

/// Gradients share the parameter layout.
pub type MlpGrads<T = f32> = MlpParams<T>;

/// Activations recorded by [`mlp_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T = f32> {
    /// Input to each layer (post-activation of the previous one).
    layer_inputs: Vec<DenseMatrix<T>>,
    /// Pre-activation output of each layer.
    pre_activations: Vec<DenseMatrix<T>>,
}

impl<T: Real> MlpParams<T> {
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape("layer bias", layer.out_dim(), layer.bias.len()));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.in_dim() != layer.out_dim() {
                    return Err(Error::shape(
                        "adjacent layer dims",
                        layer.out_dim(),
                        next.in_dim(),
                    ));
                }
            }
        }
        Ok(Self { layers })
    }

    /// Random initialisation for the layer widths `dims` (input first).
    /// Weights are He-normal, biases zero.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs input and output widths, got {dims:?}"
            )));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in.max(1) as f64).sqrt();
                let values = (0..fan_in * fan_out)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        T::from_f64_lossy(z * std)
                    })
                    .collect();
                Layer {
                    weight: DenseMatrix::from_vec(fan_in, fan_out, values)
                        .expect("sized by construction"),
                    bias: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    /// Zero-valued parameters with the same layout as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: DenseMatrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![T::zero(); l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Widths including input and output, e.g. `[12, 8, 5]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.cast(),
                    bias: l.bias.iter().map(|b| U::from_f64_lossy(b.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

impl<T: Real> ParamSet<T> for MlpParams<T> {
    fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.values(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.values_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect()
    }
}

pub fn mlp_forward<T: Real>(
    params: &MlpParams<T>,
    input: &DenseMatrix<T>,
) -> Result<(DenseMatrix<T>, MlpCache<T>)> {
    if input.cols() != params.in_dim() {
        return Err(Error::shape("mlp input width", params.in_dim(), input.cols()));
    }
    let last = params.layers.len() - 1;
    let mut layer_inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut current = input.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = current.matmul(&layer.weight)?;
        z.add_row_vector(&layer.bias)?;
        let next = if i < last {
            z.map(|v| v.max(T::zero()))
        } else {
            z.clone()
        };
        layer_inputs.push(current);
        pre_activations.push(z);
        current = next;
    }
    Ok((
        current,
        MlpCache {
            layer_inputs,
            pre_activations,
        },
    ))
}

/// Convenience forward pass that drops the cache.
pub fn mlp_infer<T: Real>(params: &MlpParams<T>, input: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    mlp_forward(params, input).map(|(out, _)| out)
}

pub fn mlp_backward<T: Real>(
    params: &MlpParams<T>,
    cache: &MlpCache<T>,
    upstream: &DenseMatrix<T>,
) -> Result<(MlpGrads<T>, DenseMatrix<T>)> {
    let n_layers = params.layers.len();
    if cache.layer_inputs.len() != n_layers || cache.pre_activations.len() != n_layers {
        return Err(Error::Cache(format!(
            "cache has {} layers, parameters have {n_layers}",
            cache.layer_inputs.len()
        )));
    }
    for (layer, (x, z)) in params
        .layers
        .iter()
        .zip(cache.layer_inputs.iter().zip(&cache.pre_activations))
    {
        if x.cols() != layer.in_dim() || z.cols() != layer.out_dim() || x.rows() != z.rows() {
            return Err(Error::Cache(format!(
                "layer {}x{} vs cached input width {} and output width {}",
                layer.in_dim(),
                layer.out_dim(),
                x.cols(),
                z.cols()
            )));
        }
    }
    let out_shape = cache.pre_activations[n_layers - 1].shape();
    if upstream.shape() != out_shape {
        return Err(Error::shape(
            "mlp upstream gradient",
            format!("{}x{}", out_shape.0, out_shape.1),
            format!("{}x{}", upstream.rows(), upstream.cols()),
        ));
    }

    let mut grads = Vec::with_capacity(n_layers);
    let mut delta = upstream.clone();
    for i in (0..n_layers).rev() {
        if i < n_layers - 1 {
            // rectifier derivative, taken as 0 at the kink
            let z = &cache.pre_activations[i];
            for (d, &zv) in delta.values_mut().iter_mut().zip(z.values()) {
                if zv <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        let layer = &params.layers[i];
        let weight = cache.layer_inputs[i].t_matmul(&delta)?;
        let bias = delta.column_sums();
        let next_delta = delta.matmul_t(&layer.weight)?;
        grads.push(Layer { weight, bias });
        delta = next_delta;
    }
    grads.reverse();
    Ok((MlpParams { layers: grads }, delta))
}
