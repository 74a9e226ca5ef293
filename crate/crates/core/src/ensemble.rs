//! Combining the per-source classifiers' predictions on a target video.

use crate::attention::softmax_f64;
use crate::error::{Error, Result};
use crate::numkernel::negative_entropy;

/// One probability vector per source classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet(pub Vec<Vec<f64>>);

impl PredictionSet {
    pub fn classifiers(&self) -> usize {
        self.0.len()
    }

    fn class_count(&self) -> Result<usize> {
        let k = self.0.first().map_or(0, Vec::len);
        if let Some(bad) = self.0.iter().find(|p| p.len() != k) {
            return Err(Error::shape("classes per prediction", k, bad.len()));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights(pub Vec<f64>);

/// Softmax across classifiers of each prediction's negative entropy, so
/// more certain classifiers weigh more.
pub fn prediction_weights(preds: &PredictionSet) -> Result<EnsembleWeights> {
    if preds.0.is_empty() {
        return Err(Error::Config("no classifier predictions to ensemble".into()));
    }
    let certainty: Vec<f64> = preds.0.iter().map(|p| negative_entropy(p)).collect();
    Ok(EnsembleWeights(softmax_f64(&certainty)))
}

/// Weighted sum of predictions and its argmax (ties go to the lowest index).
pub fn ensemble_predict(preds: &PredictionSet, weights: &EnsembleWeights) -> Result<(Vec<f64>, usize)> {
    if preds.0.len() != weights.0.len() {
        return Err(Error::shape("ensemble weights", preds.0.len(), weights.0.len()));
    }
    let k = preds.class_count()?;
    let mut probs = vec![0.0; k];
    for (p, &w) in preds.0.iter().zip(&weights.0) {
        for (acc, &v) in probs.iter_mut().zip(p) {
            *acc += w * v;
        }
    }
    Ok((probs.clone(), argmax(&probs)))
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnsembleMode {
    #[default]
    Certainty,
    Average,
    SourceAccuracy,
}

impl EnsembleMode {
    pub fn name(&self) -> &'static str {
        match self {
            EnsembleMode::Certainty => "certainty",
            EnsembleMode::Average => "average",
            EnsembleMode::SourceAccuracy => "source_accuracy",
        }
    }
}

impl std::str::FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "certainty" => Ok(EnsembleMode::Certainty),
            "average" | "avg" => Ok(EnsembleMode::Average),
            "source_accuracy" | "src_accuracy" => Ok(EnsembleMode::SourceAccuracy),
            other => Err(Error::Config(format!("unknown ensemble mode `{other}`"))),
        }
    }
}

/// Weights under the given schema. `aux` holds the per-source source-only
/// accuracies required by [`EnsembleMode::SourceAccuracy`].
pub fn mode_weights(preds: &PredictionSet, mode: EnsembleMode, aux: Option<&[f64]>) -> Result<EnsembleWeights> {
    let m = preds.classifiers();
    match mode {
        EnsembleMode::Certainty => prediction_weights(preds),
        EnsembleMode::Average => {
            if m == 0 {
                return Err(Error::Config("no classifier predictions to ensemble".into()));
            }
            Ok(EnsembleWeights(vec![1.0 / m as f64; m]))
        }
        EnsembleMode::SourceAccuracy => {
            let aux = aux.ok_or_else(|| {
                Error::Config("source_accuracy ensembling needs per-source accuracies".into())
            })?;
            if aux.len() != m {
                return Err(Error::shape("source accuracies", m, aux.len()));
            }
            let sum: f64 = aux.iter().sum();
            if !(sum > 0.0) || aux.iter().any(|&a| a < 0.0) {
                return Err(Error::Config(format!("invalid source accuracies {aux:?}")));
            }
            Ok(EnsembleWeights(aux.iter().map(|a| a / sum).collect()))
        }
    }
}

pub fn ensemble_variant(
    preds: &PredictionSet,
    mode: EnsembleMode,
    aux: Option<&[f64]>,
) -> Result<(Vec<f64>, usize)> {
    let weights = mode_weights(preds, mode, aux)?;
    ensemble_predict(preds, &weights)
}
