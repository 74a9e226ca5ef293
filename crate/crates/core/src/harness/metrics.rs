//! Per-epoch training records, written as JSON lines.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::alignment::LossBreakdown;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub cls_loss: Vec<f64>,
    pub d_f: f64,
    pub d_t: f64,
    pub total: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

impl EpochMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }

    pub fn from_json(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Data(format!("bad metrics record: {e}")))
    }

    /// Same record with the wall clock zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: 0,
            ..self.clone()
        }
    }
}

/// Running means of the loss components over one epoch's steps.
#[derive(Debug, Clone, Default)]
pub struct EpochAccumulator {
    cls: Vec<f64>,
    d_f: f64,
    d_t: f64,
    total: f64,
    steps: usize,
}

impl EpochAccumulator {
    pub fn add(&mut self, b: &LossBreakdown) {
        if self.cls.is_empty() {
            self.cls = vec![0.0; b.cls.len()];
        }
        for (acc, l) in self.cls.iter_mut().zip(&b.cls) {
            *acc += l;
        }
        self.d_f += b.d_f;
        self.d_t += b.d_t;
        self.total += b.total;
        self.steps += 1;
    }

    pub fn finish(&self, epoch: usize, lr: f64, wall_ms: u64) -> EpochMetrics {
        let n = self.steps.max(1) as f64;
        EpochMetrics {
            epoch,
            cls_loss: self.cls.iter().map(|c| c / n).collect(),
            d_f: self.d_f / n,
            d_t: self.d_t / n,
            total: self.total / n,
            lr,
            wall_ms,
        }
    }
}

pub fn write_metrics<W: Write>(out: &mut W, records: &[EpochMetrics]) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json())?;
    }
    Ok(())
}

pub fn parse_metrics(text: &str) -> Result<Vec<EpochMetrics>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(EpochMetrics::from_json)
        .collect()
}
