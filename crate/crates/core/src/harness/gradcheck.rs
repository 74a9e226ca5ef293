//! A small, fully specified instance of the training objective for
//! finite-difference verification of its gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::alignment::{forward, taman_loss, AttentionPolicy, ClipPlan, DomainBatch, DomainBatchSet, ObjectiveConfig};
use crate::attention::AttentionWeights;
use crate::error::Result;
use crate::model::{ModelParams, ModelShape};
use crate::numkernel::{grad_check, DenseMatrix, GradCheckReport};
use crate::temporal::{FrameFeatureSequence, SamplingMode, ScaleConfig};

/// Central-difference step used on the tiny instance. Larger steps cross
/// rectifier kinks in the integration MLPs.
pub const TINY_EPS: f64 = 1e-6;

pub struct TinyInstance {
    pub model: ModelParams<f64>,
    pub batches: DomainBatchSet<f64>,
    /// Clips frozen for every evaluation of the loss.
    pub plan: ClipPlan,
    /// Attention computed once at the starting point, then held fixed.
    pub weights: Vec<AttentionWeights>,
    pub objective: ObjectiveConfig,
}

/// Two sources and a target, 8 videos each, 4 frames of 6 features, 3
/// classes, scales {2, 3} with 2 clips per scale.
pub fn tiny_instance(seed: u64, policy: AttentionPolicy, objective: ObjectiveConfig) -> Result<TinyInstance> {
    let (frames, dim, classes, batch) = (4, 6, 3, 8);
    let shape = ModelShape {
        feature_dim: dim,
        class_count: classes,
        scales: vec![2, 3],
        hidden: vec![8],
        temporal_dim: 8,
        sources: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ModelParams::<f64>::init(shape, &mut rng)?;
    let u = Uniform::new(-1.0, 1.0).expect("valid range");
    let mut domain = |tag: &str, shift: f64, labeled: bool| -> Result<DomainBatch<f64>> {
        let videos = (0..batch)
            .map(|i| {
                let values = (0..frames * dim).map(|_| shift + u.sample(&mut rng)).collect();
                FrameFeatureSequence::new(format!("{tag}{i}"), DenseMatrix::from_vec(frames, dim, values)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DomainBatch {
            videos,
            labels: labeled.then(|| (0..batch).map(|i| i % classes).collect()),
        })
    };
    let batches = DomainBatchSet {
        sources: vec![domain("s0_", 0.0, true)?, domain("s1_", 0.5, true)?],
        target: domain("t_", -0.5, false)?,
    };
    let cfg = ScaleConfig {
        scales: vec![2, 3],
        clips_per_scale: 2,
        mode: SamplingMode::TrainRandom,
    };
    let plan = ClipPlan::sample(&batches, &cfg, &mut rng)?;
    let stats = forward(&model, &batches, &plan)?.statistics(&model, &objective.moments)?;
    let weights = policy.weights(&stats)?;
    Ok(TinyInstance {
        model,
        batches,
        plan,
        weights,
        objective,
    })
}

impl TinyInstance {
    pub fn check(&self, eps: f64) -> Result<GradCheckReport> {
        let (_, grads) = taman_loss(&self.model, &self.batches, &self.plan, &self.weights, &self.objective)?;
        Ok(grad_check(&self.model, &grads, eps, |m| {
            taman_loss(m, &self.batches, &self.plan, &self.weights, &self.objective)
                .map(|(b, _)| b.total)
                .unwrap_or(f64::NAN)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_objective_passes_with_strong_alignment_terms() {
        let objective = ObjectiveConfig {
            lambda_df: 1.0,
            lambda_dt: 1.0,
            ..ObjectiveConfig::default()
        };
        let inst = tiny_instance(4, AttentionPolicy::Full, objective).unwrap();
        let report = inst.check(TINY_EPS).unwrap();
        assert!(report.pass, "max rel error {}", report.max_rel_error);
    }
}
