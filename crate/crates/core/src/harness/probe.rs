//! Multinomial logistic-regression probes on fixed video descriptors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkernel::{mlp_backward, mlp_forward, mlp_infer, sgd_step, softmax_cross_entropy, DenseMatrix, MlpParams, SgdState};
use crate::temporal::FrameFeatureSequence;

/// Average of all frames, the order-free descriptor.
pub fn frame_mean_features(videos: &[FrameFeatureSequence<f32>]) -> Result<DenseMatrix<f64>> {
    let rows: Vec<Vec<f64>> = videos
        .iter()
        .map(|v| v.frame_mean().into_iter().map(f64::from).collect())
        .collect();
    DenseMatrix::from_rows(&rows)
}

/// First and last frame concatenated, the descriptor of one 2-frame clip.
pub fn endpoint_clip_features(videos: &[FrameFeatureSequence<f32>]) -> Result<DenseMatrix<f64>> {
    let rows: Vec<Vec<f64>> = videos
        .iter()
        .map(|v| {
            let f = v.frames();
            f.row(0).iter().chain(f.row(f.rows() - 1)).map(|&x| f64::from(x)).collect()
        })
        .collect();
    DenseMatrix::from_rows(&rows)
}

#[derive(Debug, Clone)]
pub struct LinearProbe {
    classifier: MlpParams<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl LinearProbe {
    /// Full-batch gradient descent with momentum on standardized inputs.
    pub fn fit(x: &DenseMatrix<f64>, labels: &[usize], classes: usize, iterations: usize) -> Result<Self> {
        if x.rows() != labels.len() || x.rows() == 0 {
            return Err(Error::shape("probe labels", x.rows(), labels.len()));
        }
        let mean = x.column_means();
        let scale: Vec<f64> = (0..x.cols())
            .map(|c| {
                let var = x.iter_rows().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / x.rows() as f64;
                var.sqrt().max(1e-12)
            })
            .collect();
        let mut probe = Self {
            classifier: MlpParams::init(&[x.cols(), classes], &mut ChaCha8Rng::seed_from_u64(0))?,
            mean,
            scale,
        };
        let z = probe.standardize(x);
        let mut sgd = SgdState::new(&probe.classifier, 0.5, 0.9, 0.0);
        for _ in 0..iterations {
            let (logits, cache) = mlp_forward(&probe.classifier, &z)?;
            let (_, grad) = softmax_cross_entropy(&logits, labels)?;
            let (g, _) = mlp_backward(&probe.classifier, &cache, &grad)?;
            sgd_step(&mut probe.classifier, &g, &mut sgd)?;
        }
        Ok(probe)
    }

    fn standardize(&self, x: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        let mut z = x.clone();
        for r in 0..z.rows() {
            for (c, v) in z.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.scale[c];
            }
        }
        z
    }

    pub fn predict(&self, x: &DenseMatrix<f64>) -> Result<Vec<usize>> {
        let logits = mlp_infer(&self.classifier, &self.standardize(x))?;
        Ok(logits.iter_rows().map(|r| crate::ensemble::argmax(r)).collect())
    }

    pub fn accuracy(&self, x: &DenseMatrix<f64>, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}
