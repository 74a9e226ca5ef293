//! Trainable parameters: one integration MLP per temporal scale (shared
//! across domains) and one linear classifier per source domain.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numkernel::{MlpParams, ParamSet, Real};

/// Layer widths of a model, enough to rebuild it from a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub feature_dim: usize,
    pub class_count: usize,
    pub scales: Vec<usize>,
    /// Hidden widths of every integration MLP.
    pub hidden: Vec<usize>,
    /// Output width of the integration MLPs, shared by all scales.
    pub temporal_dim: usize,
    pub sources: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::DegenerateClasses(self.class_count));
        }
        if self.sources == 0 {
            return Err(Error::Config("at least one source domain is required".into()));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&r| r < 2) {
            return Err(Error::Config(format!("invalid scales {:?}", self.scales)));
        }
        if self.feature_dim == 0 || self.temporal_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    fn integrator_dims(&self, r: usize) -> Vec<usize> {
        std::iter::once(r * self.feature_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.temporal_dim))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub shape: ModelShape,
    /// `integrators[s]` consumes clips of `shape.scales[s]` frames.
    pub integrators: Vec<MlpParams<T>>,
    pub classifiers: Vec<MlpParams<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn init<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let integrators = shape
            .scales
            .iter()
            .map(|&r| MlpParams::init(&shape.integrator_dims(r), rng))
            .collect::<Result<Vec<_>>>()?;
        let classifiers = (0..shape.sources)
            .map(|_| MlpParams::init(&[shape.temporal_dim, shape.class_count], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shape,
            integrators,
            classifiers,
        })
    }

    /// Reassembles a model, checking every tensor against `shape`.
    pub fn from_parts(
        shape: ModelShape,
        integrators: Vec<MlpParams<T>>,
        classifiers: Vec<MlpParams<T>>,
    ) -> Result<Self> {
        shape.validate()?;
        if integrators.len() != shape.scales.len() || classifiers.len() != shape.sources {
            return Err(Error::shape(
                "model parts",
                format!("{} integrators, {} classifiers", shape.scales.len(), shape.sources),
                format!("{}, {}", integrators.len(), classifiers.len()),
            ));
        }
        for (&r, g) in shape.scales.iter().zip(&integrators) {
            let expected = shape.integrator_dims(r);
            if g.dims() != expected {
                return Err(Error::shape(
                    "integration MLP widths",
                    format!("{expected:?}"),
                    format!("{:?}", g.dims()),
                ));
            }
        }
        for c in &classifiers {
            if c.dims() != [shape.temporal_dim, shape.class_count] {
                return Err(Error::shape(
                    "classifier widths",
                    format!("{:?}", [shape.temporal_dim, shape.class_count]),
                    format!("{:?}", c.dims()),
                ));
            }
        }
        Ok(Self {
            shape,
            integrators,
            classifiers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            integrators: self.integrators.iter().map(MlpParams::zeros_like).collect(),
            classifiers: self.classifiers.iter().map(MlpParams::zeros_like).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            shape: self.shape.clone(),
            integrators: self.integrators.iter().map(MlpParams::cast).collect(),
            classifiers: self.classifiers.iter().map(MlpParams::cast).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl<T: Real> ParamSet<T> for ModelParams<T> {
    fn tensors(&self) -> Vec<&[T]> {
        self.integrators
            .iter()
            .chain(&self.classifiers)
            .flat_map(|m| m.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.integrators
            .iter_mut()
            .chain(self.classifiers.iter_mut())
            .flat_map(|m| m.tensors_mut())
            .collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        let g = self
            .shape
            .scales
            .iter()
            .zip(&self.integrators)
            .flat_map(|(r, m)| m.tensor_names().into_iter().map(move |n| format!("integrator{r}.{n}")));
        let c = self
            .classifiers
            .iter()
            .enumerate()
            .flat_map(|(j, m)| m.tensor_names().into_iter().map(move |n| format!("classifier{j}.{n}")));
        g.chain(c).collect()
    }
}
