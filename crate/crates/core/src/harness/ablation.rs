//! Ablation runner: trains each variant over several seeds and reports
//! mean ± std target accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::{RunConfig, Variant};
use super::eval::{evaluate, WeightSource};
use super::manifest::Dataset;
use super::train::train;
use crate::ensemble::EnsembleMode;
use crate::error::Result;

/// Domains of one adaptation task.
#[derive(Debug, Clone)]
pub struct AdaptationTask {
    pub sources: Vec<Dataset>,
    /// Unlabeled target videos used during training.
    pub target_train: Dataset,
    /// Labeled target videos used only for evaluation.
    pub target_test: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains models on demand and remembers them, so variants that only
/// differ at evaluation time share one training run per seed.
pub struct AblationRunner<'a> {
    base: RunConfig,
    task: &'a AdaptationTask,
    models: BTreeMap<(Variant, u64), Checkpoint>,
    single_source: BTreeMap<(usize, u64), f64>,
}

impl<'a> AblationRunner<'a> {
    pub fn new(base: RunConfig, task: &'a AdaptationTask) -> Self {
        Self {
            base,
            task,
            models: BTreeMap::new(),
            single_source: BTreeMap::new(),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.base.seeds as u64).map(|i| self.base.seed + i).collect()
    }

    fn config(&self, variant: Variant, seed: u64) -> RunConfig {
        RunConfig {
            variant,
            seed,
            ..self.base.clone()
        }
    }

    /// The trained model behind `variant` for `seed`.
    pub fn model(&mut self, variant: Variant, seed: u64) -> Result<&Checkpoint> {
        let key = (variant.training_variant(), seed);
        if !self.models.contains_key(&key) {
            let cfg = self.config(key.0, seed);
            log::info!("training {} seed {seed}", key.0);
            let out = train(&cfg, &self.task.sources, &self.task.target_train, None, |_| {})?;
            self.models.insert(key, out.checkpoint);
        }
        Ok(&self.models[&key])
    }

    /// Target accuracy of a source-only model trained on source `j` alone.
    pub fn single_source_accuracy(&mut self, j: usize, seed: u64) -> Result<f64> {
        if let Some(&acc) = self.single_source.get(&(j, seed)) {
            return Ok(acc);
        }
        let cfg = self.config(Variant::SourceOnly, seed);
        log::info!("training source-only on source {j} seed {seed}");
        let out = train(
            &cfg,
            std::slice::from_ref(&self.task.sources[j]),
            &self.task.target_train,
            None,
            |_| {},
        )?;
        let acc = evaluate(
            &out.checkpoint,
            &self.task.target_test,
            EnsembleMode::Certainty,
            None,
            WeightSource::Target,
        )?
        .top1;
        self.single_source.insert((j, seed), acc);
        Ok(acc)
    }

    /// Target accuracy of `variant` for one seed.
    pub fn accuracy(&mut self, variant: Variant, seed: u64) -> Result<f64> {
        let aux = match variant.ensemble() {
            EnsembleMode::SourceAccuracy => Some(
                (0..self.task.sources.len())
                    .map(|j| self.single_source_accuracy(j, seed))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let task = self.task;
        let ck = self.model(variant, seed)?;
        Ok(evaluate(ck, &task.target_test, variant.ensemble(), aux.as_deref(), WeightSource::Target)?.top1)
    }

    pub fn row(&mut self, variant: Variant) -> Result<AblationRow> {
        let accuracies = self
            .seeds()
            .into_iter()
            .map(|s| self.accuracy(variant, s))
            .collect::<Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&accuracies);
        Ok(AblationRow {
            variant: variant.name().to_string(),
            accuracies,
            mean,
            std,
        })
    }
}

/// One row per variant, in the order given.
pub fn run_ablation(base: &RunConfig, variants: &[Variant], task: &AdaptationTask) -> Result<Vec<AblationRow>> {
    let mut runner = AblationRunner::new(base.clone(), task);
    variants.iter().map(|&v| runner.row(v)).collect()
}

pub fn format_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<24} {:>8} {:>8}\n", "variant", "mean", "std");
    for r in rows {
        let _ = writeln!(out, "{:<24} {:>8.2} {:>8.2}", r.variant, 100.0 * r.mean, 100.0 * r.std);
    }
    out
}
