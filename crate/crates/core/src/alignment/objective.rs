//! The joint objective: per-source classification on attentive global
//! temporal features plus spatial and temporal moment alignment.

use rand::Rng;

use super::moments::{moment_discrepancy, moment_discrepancy_backward, MomentConfig};
use crate::attention::{
    combine_weights, confidence_weight, dominance_weights, normalize_confidence, target_weights,
    AttentionWeights,
};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numkernel::{
    mlp_backward, mlp_forward, mlp_infer, softmax_cross_entropy, softmax_rows, DenseMatrix,
    MlpCache, Real,
};
use crate::temporal::{sample_clips, write_clip_row, ClipIndex, FrameFeatureSequence, ScaleConfig};

/// Videos of one domain in a mini-batch. Only source batches carry labels.
#[derive(Debug, Clone)]
pub struct DomainBatch<T = f32> {
    pub videos: Vec<FrameFeatureSequence<T>>,
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct DomainBatchSet<T = f32> {
    pub sources: Vec<DomainBatch<T>>,
    pub target: DomainBatch<T>,
}

impl<T: Real> DomainBatchSet<T> {
    /// Sources in order, then the target.
    pub fn domains(&self) -> impl Iterator<Item = &DomainBatch<T>> {
        self.sources.iter().chain(std::iter::once(&self.target))
    }

    pub fn validate(&self, model: &ModelParams<T>) -> Result<()> {
        let shape = &model.shape;
        if self.sources.len() != shape.sources {
            return Err(Error::shape("source domains", shape.sources, self.sources.len()));
        }
        for (j, src) in self.sources.iter().enumerate() {
            let labels = src
                .labels
                .as_ref()
                .ok_or_else(|| Error::Data(format!("source batch {j} has no labels")))?;
            if labels.len() != src.videos.len() {
                return Err(Error::shape("labels per source video", src.videos.len(), labels.len()));
            }
            if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= shape.class_count) {
                return Err(Error::Label {
                    row,
                    label,
                    classes: shape.class_count,
                });
            }
        }
        if self.target.labels.is_some() {
            return Err(Error::Data("the target batch must not carry labels".into()));
        }
        for (d, batch) in self.domains().enumerate() {
            if batch.videos.is_empty() {
                return Err(Error::Batch(format!("domain {d} has no videos")));
            }
            for v in &batch.videos {
                if v.feature_dim() != shape.feature_dim {
                    return Err(Error::shape("frame feature width", shape.feature_dim, v.feature_dim()));
                }
                if let Some(&r) = shape.scales.iter().find(|&&r| r > v.frame_count()) {
                    return Err(Error::Scale {
                        r,
                        frames: v.frame_count(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Clips for every `[domain][video][scale]`, domains ordered sources then
/// target. Frozen for the duration of one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPlan {
    pub clips: Vec<Vec<Vec<Vec<ClipIndex>>>>,
}

impl ClipPlan {
    pub fn sample<T: Real, R: Rng + ?Sized>(
        batches: &DomainBatchSet<T>,
        cfg: &ScaleConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let clips = batches
            .domains()
            .map(|batch| {
                batch
                    .videos
                    .iter()
                    .map(|v| {
                        cfg.scales
                            .iter()
                            .map(|&r| {
                                sample_clips(v.frame_count(), r, cfg, rng.random(), &v.video_id)
                                    .map(|s| s.clips)
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { clips })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub moments: MomentConfig,
    pub lambda_df: f64,
    pub lambda_dt: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            moments: MomentConfig::default(),
            lambda_df: 0.005,
            lambda_dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub cls: Vec<f64>,
    pub d_f: f64,
    pub d_t: f64,
    pub lambda_df: f64,
    pub lambda_dt: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn recombine(&self) -> f64 {
        self.cls.iter().sum::<f64>() + self.lambda_df * self.d_f + self.lambda_dt * self.d_t
    }
}

/// Local temporal features of every domain, with the activations needed to
/// backpropagate into the integration MLPs.
pub struct ForwardPass<T: Real = f32> {
    /// `[domain][scale]`, each `videos × temporal_dim`.
    pub local: Vec<Vec<DenseMatrix<T>>>,
    /// Frame-mean spatial features per domain, `videos × feature_dim`.
    pub spatial: Vec<DenseMatrix<T>>,
    caches: Vec<MlpCache<T>>,
    /// For each scale, the `(domain, video)` owning every MLP input row.
    row_owner: Vec<Vec<(usize, usize)>>,
}

pub fn forward<T: Real>(
    model: &ModelParams<T>,
    batches: &DomainBatchSet<T>,
    plan: &ClipPlan,
) -> Result<ForwardPass<T>> {
    let shape = &model.shape;
    let domains: Vec<&DomainBatch<T>> = batches.domains().collect();
    if plan.clips.len() != domains.len() {
        return Err(Error::shape("clip plan domains", domains.len(), plan.clips.len()));
    }
    for (d, batch) in domains.iter().enumerate() {
        if plan.clips[d].len() != batch.videos.len() {
            return Err(Error::shape("clip plan videos", batch.videos.len(), plan.clips[d].len()));
        }
    }

    let mut local: Vec<Vec<DenseMatrix<T>>> = domains
        .iter()
        .map(|b| {
            shape
                .scales
                .iter()
                .map(|_| DenseMatrix::zeros(b.videos.len(), shape.temporal_dim))
                .collect()
        })
        .collect();
    let mut caches = Vec::with_capacity(shape.scales.len());
    let mut row_owner = Vec::with_capacity(shape.scales.len());

    for (s, &r) in shape.scales.iter().enumerate() {
        let mut owners = Vec::new();
        for (d, batch) in domains.iter().enumerate() {
            for v in 0..batch.videos.len() {
                let clips = &plan.clips[d][v][s];
                if clips.is_empty() {
                    return Err(Error::Batch(format!("no clips for scale {r}")));
                }
                owners.extend(std::iter::repeat_n((d, v), clips.len()));
            }
        }
        let mut input = DenseMatrix::zeros(owners.len(), r * shape.feature_dim);
        let mut row = 0;
        for (d, batch) in domains.iter().enumerate() {
            for (v, video) in batch.videos.iter().enumerate() {
                for clip in &plan.clips[d][v][s] {
                    write_clip_row(video, clip, r, input.row_mut(row))?;
                    row += 1;
                }
            }
        }
        let (out, cache) = mlp_forward(&model.integrators[s], &input)?;
        for (row, &(d, v)) in owners.iter().enumerate() {
            let dest = local[d][s].row_mut(v);
            for (acc, &x) in dest.iter_mut().zip(out.row(row)) {
                *acc = *acc + x;
            }
        }
        caches.push(cache);
        row_owner.push(owners);
    }

    let spatial = domains
        .iter()
        .map(|b| {
            let rows: Vec<Vec<T>> = b.videos.iter().map(FrameFeatureSequence::frame_mean).collect();
            DenseMatrix::from_rows(&rows)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ForwardPass {
        local,
        spatial,
        caches,
        row_owner,
    })
}

/// `Σ_s w_s · lt_s` for one domain.
pub fn aggregate<T: Real>(local: &[DenseMatrix<T>], weights: &[f64]) -> Result<DenseMatrix<T>> {
    if local.len() != weights.len() {
        return Err(Error::shape("attention weights per scale", local.len(), weights.len()));
    }
    let (rows, cols) = local[0].shape();
    let mut out = DenseMatrix::zeros(rows, cols);
    for (lt, &w) in local.iter().zip(weights) {
        out.add_scaled(lt, T::from_f64_lossy(w))?;
    }
    Ok(out)
}

/// Statistics that drive the attention of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleStatistics {
    /// Discrepancy of the raw (additive) global features.
    pub d_global: f64,
    /// Per-scale local discrepancies.
    pub d_local: Vec<f64>,
    /// `[source][scale]` batch-mean confidence weights.
    pub confidence: Vec<Vec<f64>>,
}

impl<T: Real> ForwardPass<T> {
    fn source_count(&self) -> usize {
        self.local.len() - 1
    }

    pub fn raw_global(&self, domain: usize) -> Result<DenseMatrix<T>> {
        aggregate(&self.local[domain], &vec![1.0; self.local[domain].len()])
    }

    pub fn statistics(&self, model: &ModelParams<T>, moments: &MomentConfig) -> Result<ScaleStatistics> {
        let m = self.source_count();
        let raw: Vec<DenseMatrix<T>> = (0..=m).map(|d| self.raw_global(d)).collect::<Result<_>>()?;
        let raw_refs: Vec<&DenseMatrix<T>> = raw[..m].iter().collect();
        let d_global = moment_discrepancy(&raw_refs, &raw[m], moments)?.value;
        let d_local = (0..model.shape.scales.len())
            .map(|s| {
                let srcs: Vec<&DenseMatrix<T>> = (0..m).map(|d| &self.local[d][s]).collect();
                moment_discrepancy(&srcs, &self.local[m][s], moments).map(|d| d.value)
            })
            .collect::<Result<Vec<_>>>()?;
        let confidence = (0..m)
            .map(|j| {
                self.local[j]
                    .iter()
                    .map(|lt| mean_confidence(&model.classifiers[j], lt))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScaleStatistics {
            d_global,
            d_local,
            confidence,
        })
    }

    /// Loss and gradients with the attention weights held constant.
    /// `weights` lists the sources then the target.
    pub fn loss_and_grads(
        &self,
        model: &ModelParams<T>,
        labels: &[&[usize]],
        weights: &[AttentionWeights],
        cfg: &ObjectiveConfig,
    ) -> Result<(LossBreakdown, ModelParams<T>)> {
        let m = self.source_count();
        if weights.len() != m + 1 {
            return Err(Error::shape("attention weight sets", m + 1, weights.len()));
        }
        if labels.len() != m {
            return Err(Error::shape("label sets", m, labels.len()));
        }
        let global: Vec<DenseMatrix<T>> = self
            .local
            .iter()
            .zip(weights)
            .map(|(lt, w)| aggregate(lt, &w.weights))
            .collect::<Result<_>>()?;

        let mut grads = model.zeros_like();
        let mut global_grad: Vec<DenseMatrix<T>> = global
            .iter()
            .map(|g| DenseMatrix::zeros(g.rows(), g.cols()))
            .collect();

        let mut cls = Vec::with_capacity(m);
        for j in 0..m {
            let (logits, cache) = mlp_forward(&model.classifiers[j], &global[j])?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, labels[j])?;
            let (cgrad, dt) = mlp_backward(&model.classifiers[j], &cache, &dlogits)?;
            grads.classifiers[j] = cgrad;
            global_grad[j].add_assign(&dt)?;
            cls.push(loss.as_f64());
        }

        let src_spatial: Vec<&DenseMatrix<T>> = self.spatial[..m].iter().collect();
        let d_f = moment_discrepancy(&src_spatial, &self.spatial[m], &cfg.moments)?.value;

        let src_global: Vec<&DenseMatrix<T>> = global[..m].iter().collect();
        let d_t = moment_discrepancy(&src_global, &global[m], &cfg.moments)?.value;
        if cfg.lambda_dt != 0.0 {
            let (gs, gt) =
                moment_discrepancy_backward(&src_global, &global[m], &cfg.moments, cfg.lambda_dt)?;
            for (acc, g) in global_grad.iter_mut().zip(gs.iter().chain([&gt])) {
                acc.add_assign(g)?;
            }
        }

        // back through the attentive aggregation into each scale's MLP
        for (s, integrator) in model.integrators.iter().enumerate() {
            let owners = &self.row_owner[s];
            let mut upstream = DenseMatrix::zeros(owners.len(), model.shape.temporal_dim);
            for (row, &(d, v)) in owners.iter().enumerate() {
                let w = T::from_f64_lossy(weights[d].weights[s]);
                for (u, &g) in upstream.row_mut(row).iter_mut().zip(global_grad[d].row(v)) {
                    *u = w * g;
                }
            }
            let (g, _) = mlp_backward(integrator, &self.caches[s], &upstream)?;
            grads.integrators[s] = g;
        }

        let mut breakdown = LossBreakdown {
            cls,
            d_f,
            d_t,
            lambda_df: cfg.lambda_df,
            lambda_dt: cfg.lambda_dt,
            total: 0.0,
        };
        breakdown.total = breakdown.recombine();
        Ok((breakdown, grads))
    }
}

fn mean_confidence<T: Real>(
    classifier: &crate::numkernel::MlpParams<T>,
    lt: &DenseMatrix<T>,
) -> Result<f64> {
    let probs = softmax_rows(&mlp_infer(classifier, lt)?);
    let mut acc = 0.0;
    for row in probs.iter_rows() {
        acc += confidence_weight(row)?;
    }
    Ok(acc / probs.rows().max(1) as f64)
}

/// How per-scale attention is formed; the non-default policies are the
/// ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionPolicy {
    /// Confidence × dominance on sources, dominance on the target.
    #[default]
    Full,
    /// Equal confidences: every domain uses the dominance weights.
    NoConfidence,
    /// Confidence only on sources, uniform on the target.
    NoDominance,
    /// Plain sum of local features.
    Additive,
    /// All weight on the scale with the smallest local discrepancy.
    DominanceMin,
    /// All weight on the scale with the largest local discrepancy.
    DominanceMax,
    /// Uniform weights everywhere.
    Uniform,
}

impl AttentionPolicy {
    /// Weights for every source then the target.
    pub fn weights(&self, stats: &ScaleStatistics) -> Result<Vec<AttentionWeights>> {
        let m = stats.confidence.len();
        let scales = stats.d_local.len();
        let dominance = || dominance_weights(stats.d_global, &stats.d_local);
        let all = |w: AttentionWeights| Ok(vec![w; m + 1]);
        match self {
            AttentionPolicy::Full => {
                let dom = dominance()?;
                let mut out = stats
                    .confidence
                    .iter()
                    .map(|c| combine_weights(c, &dom))
                    .collect::<Result<Vec<_>>>()?;
                out.push(target_weights(&dom));
                Ok(out)
            }
            AttentionPolicy::NoConfidence => {
                let dom = dominance()?;
                let mut out = (0..m)
                    .map(|_| combine_weights(&vec![1.0; scales], &dom))
                    .collect::<Result<Vec<_>>>()?;
                out.push(target_weights(&dom));
                Ok(out)
            }
            AttentionPolicy::NoDominance => {
                let mut out: Vec<_> = stats.confidence.iter().map(|c| normalize_confidence(c)).collect();
                out.push(AttentionWeights::uniform(scales));
                Ok(out)
            }
            AttentionPolicy::Additive => all(AttentionWeights::additive(scales)),
            AttentionPolicy::DominanceMin => all(AttentionWeights::one_hot(scales, arg_extreme(&stats.d_local, false))),
            AttentionPolicy::DominanceMax => all(AttentionWeights::one_hot(scales, arg_extreme(&stats.d_local, true))),
            AttentionPolicy::Uniform => all(AttentionWeights::uniform(scales)),
        }
    }

    /// Target weights from discrepancy statistics alone (no labels needed).
    pub fn target_weights(&self, d_global: f64, d_local: &[f64]) -> Result<AttentionWeights> {
        let scales = d_local.len();
        Ok(match self {
            AttentionPolicy::Full | AttentionPolicy::NoConfidence => {
                target_weights(&dominance_weights(d_global, d_local)?)
            }
            AttentionPolicy::NoDominance | AttentionPolicy::Uniform => AttentionWeights::uniform(scales),
            AttentionPolicy::Additive => AttentionWeights::additive(scales),
            AttentionPolicy::DominanceMin => AttentionWeights::one_hot(scales, arg_extreme(d_local, false)),
            AttentionPolicy::DominanceMax => AttentionWeights::one_hot(scales, arg_extreme(d_local, true)),
        })
    }
}

/// First index of the minimum (or maximum) value.
fn arg_extreme(values: &[f64], max: bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if (max && v > values[best]) || (!max && v < values[best]) {
            best = i;
        }
    }
    best
}

/// Everything one optimization step computes before the update.
pub struct StepOutcome<T: Real = f32> {
    pub breakdown: LossBreakdown,
    pub grads: ModelParams<T>,
    pub stats: ScaleStatistics,
    pub weights: Vec<AttentionWeights>,
}

/// Forward pass, attention, loss and gradients for one mini-batch.
pub fn training_step<T: Real>(
    model: &ModelParams<T>,
    batches: &DomainBatchSet<T>,
    plan: &ClipPlan,
    policy: AttentionPolicy,
    cfg: &ObjectiveConfig,
) -> Result<StepOutcome<T>> {
    batches.validate(model)?;
    let pass = forward(model, batches, plan)?;
    let stats = pass.statistics(model, &cfg.moments)?;
    let weights = policy.weights(&stats)?;
    let labels = source_labels(batches)?;
    let (breakdown, grads) = pass.loss_and_grads(model, &labels, &weights, cfg)?;
    Ok(StepOutcome {
        breakdown,
        grads,
        stats,
        weights,
    })
}

/// The full objective and its gradient for fixed clips and fixed attention
/// weights (sources then target).
pub fn taman_loss<T: Real>(
    model: &ModelParams<T>,
    batches: &DomainBatchSet<T>,
    plan: &ClipPlan,
    weights: &[AttentionWeights],
    cfg: &ObjectiveConfig,
) -> Result<(LossBreakdown, ModelParams<T>)> {
    batches.validate(model)?;
    let pass = forward(model, batches, plan)?;
    let labels = source_labels(batches)?;
    pass.loss_and_grads(model, &labels, weights, cfg)
}

fn source_labels<T: Real>(batches: &DomainBatchSet<T>) -> Result<Vec<&[usize]>> {
    batches
        .sources
        .iter()
        .enumerate()
        .map(|(j, s)| {
            s.labels
                .as_deref()
                .ok_or_else(|| Error::Data(format!("source batch {j} has no labels")))
        })
        .collect()
}
