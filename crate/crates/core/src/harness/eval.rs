//! Top-1 evaluation of a checkpoint with deterministic clip sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::manifest::Dataset;
use crate::alignment::{aggregate, forward, ClipPlan, DomainBatch, DomainBatchSet};
use crate::ensemble::{ensemble_variant, mode_weights, EnsembleMode, PredictionSet};
use crate::error::{Error, Result};
use crate::numkernel::{mlp_infer, softmax_rows, DenseMatrix};
use crate::temporal::{FrameFeatureSequence, SamplingMode};

/// Videos pushed through the integration MLPs at once.
const CHUNK: usize = 256;

/// Which domain's attention weights build the global feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightSource {
    #[default]
    Target,
    Source(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: &'static str,
    pub top1: f64,
    /// `None` for classes without test videos.
    pub per_class: Vec<Option<f64>>,
    /// Mean ensemble weight of each source classifier.
    pub mean_weights: Vec<f64>,
    /// Top-1 accuracy of each source classifier on its own.
    pub per_classifier: Vec<f64>,
    pub predictions: Vec<usize>,
}

fn check_compatible(ck: &Checkpoint, data: &Dataset) -> Result<()> {
    let shape = &ck.model.shape;
    if data.class_count != shape.class_count {
        return Err(Error::Compatibility(format!(
            "dataset has {} classes, checkpoint was trained on {}",
            data.class_count, shape.class_count
        )));
    }
    if let Some(v) = data
        .videos
        .iter()
        .find(|v| v.frame_count() != ck.frames || v.feature_dim() != shape.feature_dim)
    {
        return Err(Error::Compatibility(format!(
            "video {} is {}x{}, checkpoint expects {}x{}",
            v.video_id,
            v.frame_count(),
            v.feature_dim(),
            ck.frames,
            shape.feature_dim
        )));
    }
    Ok(())
}

/// Attention-weighted global temporal features, one row per video.
pub fn global_features(
    ck: &Checkpoint,
    videos: &[FrameFeatureSequence<f32>],
    weights: WeightSource,
) -> Result<DenseMatrix<f32>> {
    let row = match weights {
        WeightSource::Target => ck.eval_weights.len().checked_sub(1),
        WeightSource::Source(j) => (j + 1 < ck.eval_weights.len()).then_some(j),
    }
    .ok_or_else(|| Error::Config(format!("checkpoint has no attention weights for {weights:?}")))?;
    let w = &ck.eval_weights[row];
    let scale_cfg = ck.config.scale_config(ck.frames, SamplingMode::EvalDeterministic)?;
    if scale_cfg.scales != ck.model.shape.scales {
        return Err(Error::Compatibility("checkpoint config and model scales disagree".into()));
    }
    // evaluation clips are derived from video ids, the seed is unused
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rows = Vec::with_capacity(videos.len());
    for chunk in videos.chunks(CHUNK) {
        let batches = DomainBatchSet {
            sources: Vec::new(),
            target: DomainBatch {
                videos: chunk.to_vec(),
                labels: None,
            },
        };
        let plan = ClipPlan::sample(&batches, &scale_cfg, &mut rng)?;
        let pass = forward(&ck.model, &batches, &plan)?;
        let t = aggregate(&pass.local[0], w)?;
        rows.extend(t.iter_rows().map(<[f32]>::to_vec));
    }
    DenseMatrix::from_rows(&rows)
}

/// Classifies every video of `data` by ensembling the source classifiers.
/// `aux` carries the per-source accuracies for [`EnsembleMode::SourceAccuracy`].
pub fn evaluate(
    ck: &Checkpoint,
    data: &Dataset,
    mode: EnsembleMode,
    aux: Option<&[f64]>,
    weights: WeightSource,
) -> Result<EvalReport> {
    check_compatible(ck, data)?;
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Data(format!("evaluation set `{}` is unlabeled", data.domain)))?;
    if data.is_empty() {
        return Err(Error::Data(format!("evaluation set `{}` is empty", data.domain)));
    }
    let t = global_features(ck, &data.videos, weights)?;
    let probs: Vec<DenseMatrix<f32>> = ck
        .model
        .classifiers
        .iter()
        .map(|c| mlp_infer(c, &t).map(|l| softmax_rows(&l)))
        .collect::<Result<_>>()?;

    let k = ck.model.shape.class_count;
    let m = probs.len();
    let mut hits = vec![0usize; k];
    let mut counts = vec![0usize; k];
    let mut single_hits = vec![0usize; m];
    let mut weight_sums = vec![0.0; m];
    let mut predictions = Vec::with_capacity(data.len());
    for (v, &label) in labels.iter().enumerate() {
        let preds = PredictionSet(
            probs
                .iter()
                .map(|p| p.row(v).iter().map(|&x| f64::from(x)).collect())
                .collect(),
        );
        let w = mode_weights(&preds, mode, aux)?;
        for (s, x) in weight_sums.iter_mut().zip(&w.0) {
            *s += x;
        }
        for (j, p) in preds.0.iter().enumerate() {
            if crate::ensemble::argmax(p) == label {
                single_hits[j] += 1;
            }
        }
        let (_, predicted) = ensemble_variant(&preds, mode, aux)?;
        counts[label] += 1;
        if predicted == label {
            hits[label] += 1;
        }
        predictions.push(predicted);
    }
    let n = data.len() as f64;
    Ok(EvalReport {
        mode: mode.name(),
        top1: hits.iter().sum::<usize>() as f64 / n,
        per_class: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
            .collect(),
        mean_weights: weight_sums.iter().map(|s| s / n).collect(),
        per_classifier: single_hits.iter().map(|&h| h as f64 / n).collect(),
        predictions,
    })
}
