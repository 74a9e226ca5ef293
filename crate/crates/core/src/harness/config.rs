//! Run configuration and its `key=value` text form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::alignment::{AttentionPolicy, MomentConfig, ObjectiveConfig};
use crate::ensemble::EnsembleMode;
use crate::error::{Error, Result};
use crate::temporal::{SamplingMode, ScaleConfig};

/// Ablation variants. Each fixes an attention policy, the alignment
/// weights and the ensemble schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub enum Variant {
    #[default]
    Full,
    NoConfidence,
    NoDominance,
    NoLocalAttention,
    DominanceMin,
    DominanceMax,
    EnsembleAvg,
    EnsembleSrcAccuracy,
    SourceOnly,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Full,
        Variant::NoConfidence,
        Variant::NoDominance,
        Variant::NoLocalAttention,
        Variant::DominanceMin,
        Variant::DominanceMax,
        Variant::EnsembleAvg,
        Variant::EnsembleSrcAccuracy,
        Variant::SourceOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoConfidence => "no_confidence",
            Variant::NoDominance => "no_dominance",
            Variant::NoLocalAttention => "no_local_attention",
            Variant::DominanceMin => "dominance_min",
            Variant::DominanceMax => "dominance_max",
            Variant::EnsembleAvg => "ensemble_avg",
            Variant::EnsembleSrcAccuracy => "ensemble_src_accuracy",
            Variant::SourceOnly => "source_only",
        }
    }

    pub fn policy(&self) -> AttentionPolicy {
        match self {
            Variant::NoConfidence => AttentionPolicy::NoConfidence,
            Variant::NoDominance => AttentionPolicy::NoDominance,
            Variant::NoLocalAttention => AttentionPolicy::Additive,
            Variant::DominanceMin => AttentionPolicy::DominanceMin,
            Variant::DominanceMax => AttentionPolicy::DominanceMax,
            Variant::SourceOnly => AttentionPolicy::Uniform,
            Variant::Full | Variant::EnsembleAvg | Variant::EnsembleSrcAccuracy => AttentionPolicy::Full,
        }
    }

    pub fn ensemble(&self) -> EnsembleMode {
        match self {
            Variant::EnsembleAvg => EnsembleMode::Average,
            Variant::EnsembleSrcAccuracy => EnsembleMode::SourceAccuracy,
            _ => EnsembleMode::Certainty,
        }
    }

    pub fn aligns(&self) -> bool {
        *self != Variant::SourceOnly
    }

    /// The variant whose trained model this one evaluates; ensemble variants
    /// only change how a full model's classifiers are combined.
    pub fn training_variant(&self) -> Variant {
        match self {
            Variant::EnsembleAvg | Variant::EnsembleSrcAccuracy => Variant::Full,
            v => *v,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Videos per domain per step.
    pub batch_size: usize,
    pub lambda_df: f64,
    pub lambda_dt: f64,
    /// Temporal scales; `None` means every scale `2..=h`.
    pub scales: Option<Vec<usize>>,
    /// Clips sampled per scale.
    pub z_max: usize,
    pub moments: Vec<u32>,
    pub seed: u64,
    pub variant: Variant,
    pub hidden: Vec<usize>,
    pub temporal_dim: usize,
    /// Epochs after which the learning rate drops tenfold.
    pub lr_decay_epochs: Vec<usize>,
    /// Seeds `seed..seed + seeds` used by the ablation runner.
    pub seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 0.0001,
            epochs: 100,
            batch_size: 32,
            lambda_df: 0.005,
            lambda_dt: 0.01,
            scales: None,
            z_max: 3,
            moments: vec![1, 2],
            seed: 0,
            variant: Variant::Full,
            hidden: vec![256],
            temporal_dim: 256,
            lr_decay_epochs: Vec::new(),
            seeds: 5,
        }
    }
}

pub const KEYS: [&str; 16] = [
    "lr",
    "momentum",
    "weight_decay",
    "epochs",
    "batch_size",
    "lambda_df",
    "lambda_dt",
    "scales",
    "z_max",
    "moments",
    "seed",
    "variant",
    "hidden",
    "temporal_dim",
    "lr_decay_epochs",
    "seeds",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

/// Comma-separated list; `a-b` expands to the inclusive range.
fn parse_list<T: FromStr + TryFrom<u64>>(key: &str, value: &str) -> Result<Vec<T>> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for item in value.split(',') {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (parse_num(key, a)?, parse_num(key, b)?);
                for x in a..=b {
                    out.push(
                        T::try_from(x).map_err(|_| Error::Config(format!("`{key}` value {x} out of range")))?,
                    );
                }
            }
            None => out.push(parse_num(key, item)?),
        }
    }
    Ok(out)
}

fn parse_usizes(key: &str, value: &str) -> Result<Vec<usize>> {
    Ok(parse_list::<u64>(key, value)?.into_iter().map(|x| x as usize).collect())
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lr" => self.lr = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "lambda_df" => self.lambda_df = parse_num(key, value)?,
            "lambda_dt" => self.lambda_dt = parse_num(key, value)?,
            "scales" => {
                self.scales = match value.trim() {
                    "all" => None,
                    v => Some(parse_usizes(key, v)?),
                }
            }
            "z_max" => self.z_max = parse_num(key, value)?,
            "moments" => {
                self.moments = parse_list::<u32>(key, value)?;
            }
            "seed" => self.seed = parse_num(key, value)?,
            "variant" => self.variant = value.trim().parse()?,
            "hidden" => self.hidden = parse_usizes(key, value)?,
            "temporal_dim" => self.temporal_dim = parse_num(key, value)?,
            "lr_decay_epochs" => self.lr_decay_epochs = parse_usizes(key, value)?,
            "seeds" => self.seeds = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "lr" => self.lr.to_string(),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lambda_df" => self.lambda_df.to_string(),
            "lambda_dt" => self.lambda_dt.to_string(),
            "scales" => self.scales.as_deref().map_or_else(|| "all".into(), join),
            "z_max" => self.z_max.to_string(),
            "moments" => join(&self.moments),
            "seed" => self.seed.to_string(),
            "variant" => self.variant.to_string(),
            "hidden" => join(&self.hidden),
            "temporal_dim" => self.temporal_dim.to_string(),
            "lr_decay_epochs" => join(&self.lr_decay_epochs),
            "seeds" => self.seeds.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value` lines over the current values. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("z_max", self.z_max as f64),
            ("temporal_dim", self.temporal_dim as f64),
            ("seeds", self.seeds as f64),
        ];
        for (key, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("`{key}` must be positive")));
            }
        }
        let non_negative = [
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("lambda_df", self.lambda_df),
            ("lambda_dt", self.lambda_dt),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{key}` must be non-negative")));
            }
        }
        if self.momentum >= 1.0 {
            return Err(Error::Config("`momentum` must be below 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        MomentConfig::new(self.moments.clone())?;
        Ok(())
    }

    /// Objective weights for this config's variant.
    pub fn objective(&self) -> Result<ObjectiveConfig> {
        let aligns = self.variant.training_variant().aligns();
        Ok(ObjectiveConfig {
            moments: MomentConfig::new(self.moments.clone())?,
            lambda_df: if aligns { self.lambda_df } else { 0.0 },
            lambda_dt: if aligns { self.lambda_dt } else { 0.0 },
        })
    }

    pub fn scale_config(&self, frames: usize, mode: SamplingMode) -> Result<ScaleConfig> {
        let cfg = match &self.scales {
            Some(scales) => ScaleConfig {
                scales: scales.clone(),
                clips_per_scale: self.z_max,
                mode,
            },
            None => ScaleConfig::all_scales(frames, self.z_max, mode),
        };
        cfg.validate(frames)?;
        Ok(cfg)
    }

    /// Learning rate in effect during `epoch` (zero-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.lr * 0.1f64.powi(drops as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_optimizer_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.momentum, 0.9);
        assert_eq!(cfg.weight_decay, 0.0001);
        assert_eq!(cfg.lambda_df, 0.005);
        assert_eq!(cfg.lambda_dt, 0.01);
        let text = cfg.to_text();
        assert!(text.contains("lr=0.001\n"));
        assert!(text.contains("weight_decay=0.0001\n"));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.scales = Some(vec![2, 3, 5]);
        cfg.variant = Variant::DominanceMax;
        cfg.lr_decay_epochs = vec![10, 20];
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn ranges_comments_and_errors() {
        let cfg = RunConfig::parse("# desk run\nscales=2-4,6\nepochs = 3\n\n").unwrap();
        assert_eq!(cfg.scales, Some(vec![2, 3, 4, 6]));
        assert_eq!(cfg.epochs, 3);
        assert!(RunConfig::parse("bogus=1").is_err());
        assert!(RunConfig::parse("lr=-1").is_err());
        assert!(RunConfig::parse("moments=").is_err());
        assert!(RunConfig::parse("variant=nope").is_err());
        assert!(RunConfig::parse("epochs").is_err());
    }

    #[test]
    fn source_only_disables_alignment() {
        let cfg = RunConfig {
            variant: Variant::SourceOnly,
            ..RunConfig::default()
        };
        let obj = cfg.objective().unwrap();
        assert_eq!((obj.lambda_df, obj.lambda_dt), (0.0, 0.0));
        assert_eq!(cfg.variant.policy(), AttentionPolicy::Uniform);
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = RunConfig {
            lr_decay_epochs: vec![2, 4],
            ..RunConfig::default()
        };
        assert_eq!(cfg.lr_at(1), 0.001);
        assert!((cfg.lr_at(2) - 1e-4).abs() < 1e-12);
        assert!((cfg.lr_at(5) - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }
}
