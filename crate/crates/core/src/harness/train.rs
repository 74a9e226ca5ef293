//! The training loop: balanced multi-domain batches, one optimizer step per
//! batch, one metrics record per epoch.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::manifest::Dataset;
use super::metrics::{EpochAccumulator, EpochMetrics};
use crate::alignment::{forward, training_step, ClipPlan, DomainBatch, DomainBatchSet};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ModelShape};
use crate::numkernel::{sgd_step, SgdState};
use crate::temporal::SamplingMode;

/// Cycles through a shuffled order of one domain's videos, reshuffling
/// whenever it runs out. Smaller domains thereby repeat videos within an
/// epoch so every domain contributes a full batch.
struct DomainSampler {
    order: Vec<usize>,
    cursor: usize,
}

impl DomainSampler {
    fn new(len: usize) -> Self {
        Self {
            order: (0..len).collect(),
            cursor: len,
        }
    }

    fn next_batch<R: Rng>(&mut self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n)
            .map(|_| {
                if self.cursor == self.order.len() {
                    self.order.shuffle(rng);
                    self.cursor = 0;
                }
                self.cursor += 1;
                self.order[self.cursor - 1]
            })
            .collect()
    }
}

fn batch_of(data: &Dataset, idx: &[usize], labeled: bool) -> DomainBatch<f32> {
    DomainBatch {
        videos: idx.iter().map(|&i| data.videos[i].clone()).collect(),
        labels: if labeled {
            data.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect())
        } else {
            None
        },
    }
}

/// Frames per video and feature width shared by every domain.
pub fn check_domains(sources: &[Dataset], target: &Dataset) -> Result<(usize, usize, usize)> {
    if sources.is_empty() {
        return Err(Error::Data("at least one source domain is required".into()));
    }
    let class_count = sources[0].class_count;
    let mut dims = None;
    for d in sources.iter().chain(std::iter::once(target)) {
        if d.is_empty() {
            return Err(Error::Data(format!("domain `{}` has no videos", d.domain)));
        }
        if d.class_count != class_count {
            return Err(Error::Compatibility(format!(
                "domain `{}` has {} classes, expected {class_count}",
                d.domain, d.class_count
            )));
        }
        for v in &d.videos {
            let here = (v.frame_count(), v.feature_dim());
            match dims {
                None => dims = Some(here),
                Some(expected) if expected != here => {
                    return Err(Error::shape(
                        "frames x features per video",
                        format!("{expected:?}"),
                        format!("{here:?}"),
                    ))
                }
                _ => {}
            }
        }
    }
    for s in sources {
        if s.labels.as_ref().map(Vec::len) != Some(s.len()) {
            return Err(Error::Data(format!("source `{}` is not fully labeled", s.domain)));
        }
    }
    let (frames, features) = dims.expect("non-empty domains");
    Ok((frames, features, class_count))
}

fn activations_finite(model: &ModelParams<f32>, batches: &DomainBatchSet<f32>, plan: &ClipPlan) -> Result<bool> {
    let pass = forward(model, batches, plan)?;
    Ok(pass.local.iter().flatten().all(|m| m.is_finite()))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

/// Trains on labeled `sources` and the unlabeled `target`. Target labels,
/// if present, are never read. `on_epoch` sees each metrics record as it
/// is produced. On divergence the last finite model is written to
/// `checkpoint_path` (when given) before the error is returned.
pub fn train(
    cfg: &RunConfig,
    sources: &[Dataset],
    target: &Dataset,
    checkpoint_path: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (frames, feature_dim, class_count) = check_domains(sources, target)?;
    let scale_cfg = cfg.scale_config(frames, SamplingMode::TrainRandom)?;
    let objective = cfg.objective()?;
    let policy = cfg.variant.training_variant().policy();
    let shape = ModelShape {
        feature_dim,
        class_count,
        scales: scale_cfg.scales.clone(),
        hidden: cfg.hidden.clone(),
        temporal_dim: cfg.temporal_dim,
        sources: sources.len(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ModelParams::<f32>::init(shape, &mut rng)?;
    let mut sgd = SgdState::new(&model, cfg.lr as f32, cfg.momentum as f32, cfg.weight_decay as f32);
    let mut samplers: Vec<DomainSampler> = sources
        .iter()
        .chain(std::iter::once(target))
        .map(|d| DomainSampler::new(d.len()))
        .collect();
    let largest = sources.iter().chain(std::iter::once(target)).map(Dataset::len).max().unwrap_or(0);
    let steps = largest.div_ceil(cfg.batch_size);
    let n_domains = sources.len() + 1;
    let snapshot = |model: &ModelParams<f32>, weights: Vec<Vec<f64>>| Checkpoint {
        model: model.clone(),
        config: cfg.clone(),
        frames,
        eval_weights: weights,
    };

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut eval_weights = vec![vec![1.0 / scale_cfg.scales.len() as f64; scale_cfg.scales.len()]; n_domains];
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        sgd.lr = lr as f32;
        let mut acc = EpochAccumulator::default();
        let mut weight_sums = vec![vec![0.0; scale_cfg.scales.len()]; n_domains];
        for step in 0..steps {
            let domain_batches: Vec<DomainBatch<f32>> = sources
                .iter()
                .zip(samplers.iter_mut())
                .map(|(d, s)| batch_of(d, &s.next_batch(cfg.batch_size, &mut rng), true))
                .collect();
            let target_idx = samplers[n_domains - 1].next_batch(cfg.batch_size, &mut rng);
            let target_batch = batch_of(target, &target_idx, false);
            let batches = DomainBatchSet {
                sources: domain_batches,
                target: target_batch,
            };
            let plan = ClipPlan::sample(&batches, &scale_cfg, &mut rng)?;
            let outcome = training_step(&model, &batches, &plan, policy, &objective);
            let diverged = |model: &ModelParams<f32>| -> Error {
                if let Some(path) = checkpoint_path {
                    if let Err(e) = snapshot(model, eval_weights.clone()).save(path) {
                        log::error!("could not save last good checkpoint: {e}");
                    }
                }
                Error::Divergence { epoch, step }
            };
            let outcome = match outcome {
                Ok(o) => o,
                // overflowing activations surface as errors from the attention statistics
                Err(_) if !activations_finite(&model, &batches, &plan)? => return Err(diverged(&model)),
                Err(e) => return Err(e),
            };
            if !outcome.breakdown.total.is_finite() || !outcome.grads.is_finite() {
                return Err(diverged(&model));
            }
            let before = model.clone();
            sgd_step(&mut model, &outcome.grads, &mut sgd)?;
            if !model.is_finite() {
                return Err(diverged(&before));
            }
            acc.add(&outcome.breakdown);
            for (sum, w) in weight_sums.iter_mut().zip(&outcome.weights) {
                for (s, x) in sum.iter_mut().zip(&w.weights) {
                    *s += x;
                }
            }
        }
        eval_weights = weight_sums
            .into_iter()
            .map(|w| w.into_iter().map(|x| x / steps as f64).collect())
            .collect();
        let record = acc.finish(epoch, lr, started.elapsed().as_millis() as u64);
        log::info!("epoch {epoch}: total {:.4} d_t {:.4}", record.total, record.d_t);
        on_epoch(&record);
        metrics.push(record);
    }

    let checkpoint = snapshot(&model, eval_weights);
    if let Some(path) = checkpoint_path {
        checkpoint.save(path)?;
    }
    Ok(TrainOutcome { checkpoint, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{generate_synthetic, SyntheticSpec};

    fn tiny_cfg() -> RunConfig {
        RunConfig {
            epochs: 2,
            batch_size: 8,
            hidden: vec![8],
            temporal_dim: 8,
            z_max: 2,
            ..RunConfig::default()
        }
    }

    fn data() -> (Vec<Dataset>, Dataset) {
        let spec = SyntheticSpec::with_random_biases(&["a", "b", "t"], 2, 4, 3, 12, 1.0, 0.5, 3);
        let mut d = generate_synthetic(&spec).unwrap();
        let target = d.pop().unwrap().train.without_labels();
        (d.into_iter().map(|x| x.train).collect(), target)
    }

    #[test]
    fn sampler_cycles_through_every_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = DomainSampler::new(5);
        let mut seen = s.next_batch(5, &mut rng);
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.next_batch(12, &mut rng).len(), 12);
    }

    #[test]
    fn produces_one_record_per_epoch_and_is_reproducible() {
        let (sources, target) = data();
        let mut seen = 0;
        let a = train(&tiny_cfg(), &sources, &target, None, |_| seen += 1).unwrap();
        assert_eq!(seen, 2);
        assert_eq!(a.metrics.len(), 2);
        let b = train(&tiny_cfg(), &sources, &target, None, |_| {}).unwrap();
        let strip = |m: &[EpochMetrics]| m.iter().map(EpochMetrics::without_timing).collect::<Vec<_>>();
        assert_eq!(strip(&a.metrics), strip(&b.metrics));
        assert_eq!(a.checkpoint, b.checkpoint);
        for m in &a.metrics {
            let recombined = m.cls_loss.iter().sum::<f64>() + 0.005 * m.d_f + 0.01 * m.d_t;
            assert!((m.total - recombined).abs() < 1e-5);
        }
    }

    #[test]
    fn empty_domain_is_a_data_error() {
        let (sources, mut target) = data();
        target.videos.clear();
        assert!(matches!(train(&tiny_cfg(), &sources, &target, None, |_| {}), Err(Error::Data(_))));
        assert!(matches!(train(&tiny_cfg(), &[], &target, None, |_| {}), Err(Error::Data(_))));
    }

    #[test]
    fn divergence_halts_and_keeps_last_good_model() {
        let (sources, target) = data();
        let cfg = RunConfig {
            lr: 1e30,
            momentum: 0.0,
            ..tiny_cfg()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("last.tmnc");
        let err = train(&cfg, &sources, &target, Some(&path), |_| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
        let saved = Checkpoint::load(&path).unwrap();
        assert!(saved.model.is_finite());
    }
}
