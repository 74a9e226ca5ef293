//! Clip-level local temporal features and their aggregation into global
//! temporal features.

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkernel::{mlp_infer, DenseMatrix, MlpParams, Real};

/// Frame-level spatial features of one video, rows in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureSequence<T = f32> {
    pub video_id: String,
    frames: DenseMatrix<T>,
}

impl<T: Real> FrameFeatureSequence<T> {
    pub fn new(video_id: impl Into<String>, frames: DenseMatrix<T>) -> Result<Self> {
        if frames.rows() < 2 {
            return Err(Error::Data(format!(
                "a video needs at least 2 frames, got {}",
                frames.rows()
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            frames,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn frames(&self) -> &DenseMatrix<T> {
        &self.frames
    }

    /// Mean of the frame features, the video-level spatial feature.
    pub fn frame_mean(&self) -> Vec<T> {
        self.frames.column_means()
    }

    pub fn cast<U: Real>(&self) -> FrameFeatureSequence<U> {
        FrameFeatureSequence {
            video_id: self.video_id.clone(),
            frames: self.frames.cast(),
        }
    }
}

/// Strictly increasing frame indices of one clip; the scale is the length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClipIndex {
    indices: Vec<usize>,
}

impl ClipIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::Config(format!(
                "a clip spans at least 2 frames, got {}",
                indices.len()
            )));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "clip indices must be strictly increasing: {indices:?}"
            )));
        }
        Ok(Self { indices })
    }

    pub fn scale(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    #[default]
    TrainRandom,
    EvalDeterministic,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleConfig {
    pub scales: Vec<usize>,
    pub clips_per_scale: usize,
    pub mode: SamplingMode,
}

impl ScaleConfig {
    /// Scales `2..=frames`, the multi-scale relation default.
    pub fn all_scales(frames: usize, clips_per_scale: usize, mode: SamplingMode) -> Self {
        Self {
            scales: (2..=frames).collect(),
            clips_per_scale,
            mode,
        }
    }

    pub fn with_mode(&self, mode: SamplingMode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Config("no temporal scales configured".into()));
        }
        if self.clips_per_scale == 0 {
            return Err(Error::Config("clips per scale must be at least 1".into()));
        }
        if !self.scales.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "scales must be strictly increasing: {:?}",
                self.scales
            )));
        }
        match self.scales.iter().find(|&&r| r < 2 || r > frames) {
            Some(&r) => Err(Error::Scale { r, frames }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipSample {
    pub clips: Vec<ClipIndex>,
    /// Set when fewer distinct clips exist than were requested.
    pub clamped: bool,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Seed for evaluation sampling, a function of the video id and scale only.
pub fn eval_seed(video_id: &str, r: usize) -> u64 {
    // FNV-1a keeps the value stable across platforms and toolchains
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in video_id.bytes().chain((r as u64).to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

const ENUMERATION_LIMIT: u128 = 1 << 16;

/// Picks the clips of scale `r` for a video with `h` frames.
///
/// `seed` drives train-random sampling; evaluation sampling ignores it and
/// derives its seed from `video_id` and `r` through [`eval_seed`].
pub fn sample_clips(
    h: usize,
    r: usize,
    cfg: &ScaleConfig,
    seed: u64,
    video_id: &str,
) -> Result<ClipSample> {
    if r < 2 || r > h {
        return Err(Error::Scale { r, frames: h });
    }
    let total = binomial(h, r);
    if cfg.mode == SamplingMode::Exhaustive {
        let clips = (0..h)
            .combinations(r)
            .map(|indices| ClipIndex { indices })
            .collect();
        return Ok(ClipSample {
            clips,
            clamped: false,
        });
    }
    let requested = cfg.clips_per_scale.max(1);
    let clamped = requested as u128 > total;
    let count = if clamped { total as usize } else { requested };
    let seed = match cfg.mode {
        SamplingMode::EvalDeterministic => eval_seed(video_id, r),
        _ => seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let clips = if total <= ENUMERATION_LIMIT {
        let mut picked = index::sample(&mut rng, total as usize, count).into_vec();
        picked.sort_unstable();
        let mut all = (0..h).combinations(r).enumerate();
        let mut out = Vec::with_capacity(count);
        for p in picked {
            let (_, indices) = all.find(|(i, _)| *i == p).expect("index within C(h, r)");
            out.push(ClipIndex { indices });
        }
        out
    } else {
        let mut seen = BTreeSet::new();
        while seen.len() < count {
            let mut indices = index::sample(&mut rng, h, r).into_vec();
            indices.sort_unstable();
            seen.insert(indices);
        }
        seen.into_iter().map(|indices| ClipIndex { indices }).collect()
    };
    Ok(ClipSample { clips, clamped })
}

/// Stacks each clip's frames, concatenated in temporal order, as one row.
pub fn clip_rows<T: Real>(
    frames: &FrameFeatureSequence<T>,
    clips: &[ClipIndex],
) -> Result<DenseMatrix<T>> {
    let r = clips.first().map_or(0, ClipIndex::scale);
    let d = frames.feature_dim();
    let mut out = DenseMatrix::zeros(clips.len(), r * d);
    for (row, clip) in clips.iter().enumerate() {
        write_clip_row(frames, clip, r, out.row_mut(row))?;
    }
    Ok(out)
}

pub(crate) fn write_clip_row<T: Real>(
    frames: &FrameFeatureSequence<T>,
    clip: &ClipIndex,
    r: usize,
    dest: &mut [T],
) -> Result<()> {
    if clip.scale() != r {
        return Err(Error::shape("clip scale", r, clip.scale()));
    }
    let d = frames.feature_dim();
    for (slot, &f) in clip.indices.iter().enumerate() {
        if f >= frames.frame_count() {
            return Err(Error::Index {
                index: f,
                frames: frames.frame_count(),
            });
        }
        dest[slot * d..(slot + 1) * d].copy_from_slice(frames.frames.row(f));
    }
    Ok(())
}

/// `lt = Σ_z g_r(clip_z)` for the clips of one scale.
pub fn local_temporal_feature<T: Real>(
    frames: &FrameFeatureSequence<T>,
    clips: &[ClipIndex],
    g_r: &MlpParams<T>,
) -> Result<Vec<T>> {
    if clips.is_empty() {
        return Err(Error::Batch("no clips for local temporal feature".into()));
    }
    let rows = clip_rows(frames, clips)?;
    let out = mlp_infer(g_r, &rows)?;
    Ok(out.column_sums())
}

/// Local temporal features of one video, one vector per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFeatureBank<T = f32> {
    scales: Vec<usize>,
    features: Vec<Vec<T>>,
}

impl<T: Real> LocalFeatureBank<T> {
    pub fn new(scales: Vec<usize>, features: Vec<Vec<T>>) -> Result<Self> {
        if scales.len() != features.len() {
            return Err(Error::shape("scales vs features", scales.len(), features.len()));
        }
        if scales.is_empty() {
            return Err(Error::Batch("empty local feature bank".into()));
        }
        let dim = features[0].len();
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(Error::shape("local feature dimension", dim, bad.len()));
        }
        Ok(Self { scales, features })
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }
}

/// `t̂ = Σ_r lt^(r)`
pub fn raw_global_feature<T: Real>(bank: &LocalFeatureBank<T>) -> Vec<T> {
    let mut out = vec![T::zero(); bank.dim()];
    for lt in &bank.features {
        for (o, &v) in out.iter_mut().zip(lt) {
            *o = *o + v;
        }
    }
    out
}

/// `t = Σ_r w^(r) lt^(r)` with weights summing to one.
pub fn attentive_global_feature<T: Real>(bank: &LocalFeatureBank<T>, weights: &[T]) -> Result<Vec<T>> {
    if weights.len() != bank.scales.len() {
        return Err(Error::shape(
            "attention weights per scale",
            bank.scales.len(),
            weights.len(),
        ));
    }
    let sum: f64 = weights.iter().map(|w| w.as_f64()).sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Normalization { sum });
    }
    let mut out = vec![T::zero(); bank.dim()];
    for (lt, &w) in bank.features.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(lt) {
            *o = *o + w * v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Layer;
    use proptest::prelude::*;

    fn cfg(z: usize, mode: SamplingMode) -> ScaleConfig {
        ScaleConfig {
            scales: vec![2],
            clips_per_scale: z,
            mode,
        }
    }

    fn seq(h: usize, d: usize) -> FrameFeatureSequence<f64> {
        let values = (0..h * d).map(|i| i as f64 * 0.5 - 1.0).collect();
        FrameFeatureSequence::new("v", DenseMatrix::from_vec(h, d, values).unwrap()).unwrap()
    }

    #[test]
    fn exhaustive_enumeration_is_lexicographic() {
        let s = sample_clips(4, 2, &cfg(1, SamplingMode::Exhaustive), 0, "v").unwrap();
        let got: Vec<Vec<usize>> = s.clips.iter().map(|c| c.indices().to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }

    #[test]
    fn full_scale_has_one_clip_in_every_mode() {
        for mode in [
            SamplingMode::TrainRandom,
            SamplingMode::EvalDeterministic,
            SamplingMode::Exhaustive,
        ] {
            let s = sample_clips(4, 4, &cfg(3, mode), 9, "v").unwrap();
            assert_eq!(s.clips.len(), 1);
            assert_eq!(s.clips[0].indices(), &[0, 1, 2, 3]);
        }
        let s = sample_clips(4, 4, &cfg(3, SamplingMode::TrainRandom), 9, "v").unwrap();
        assert!(s.clamped);
    }

    #[test]
    fn seeded_sampling_repeats() {
        let c = ScaleConfig {
            scales: vec![3],
            clips_per_scale: 3,
            mode: SamplingMode::TrainRandom,
        };
        let a = sample_clips(8, 3, &c, 42, "v").unwrap();
        let b = sample_clips(8, 3, &c, 42, "v").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.clips.len(), 3);
        assert!(!a.clamped);
        let distinct: BTreeSet<_> = a.clips.iter().collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn eval_sampling_depends_only_on_video_and_scale() {
        let c = cfg(3, SamplingMode::EvalDeterministic);
        let a = sample_clips(8, 2, &c, 1, "clip_001").unwrap();
        let b = sample_clips(8, 2, &c, 999, "clip_001").unwrap();
        assert_eq!(a, b);
        assert_ne!(eval_seed("clip_001", 2), eval_seed("clip_001", 3));
    }

    #[test]
    fn scale_larger_than_video_is_rejected() {
        let err = sample_clips(3, 4, &cfg(1, SamplingMode::TrainRandom), 0, "v").unwrap_err();
        assert!(matches!(err, Error::Scale { r: 4, frames: 3 }));
    }

    #[test]
    fn config_validation() {
        let c = ScaleConfig::all_scales(8, 3, SamplingMode::TrainRandom);
        assert_eq!(c.scales, (2..=8).collect::<Vec<_>>());
        assert!(c.validate(8).is_ok());
        assert!(c.validate(6).is_err());
    }

    #[test]
    fn zero_integrator_gives_zero_feature() {
        let frames = seq(4, 2);
        let g = MlpParams::<f64>::init(&[4, 3, 2], &mut rand::rng()).unwrap().zeros_like();
        let clips = sample_clips(4, 2, &cfg(1, SamplingMode::Exhaustive), 0, "v").unwrap();
        let lt = local_temporal_feature(&frames, &clips.clips, &g).unwrap();
        assert!(lt.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_clip_through_unit_linear_layer() {
        // d_f = 2, r = 2, one output unit with all-ones weights: lt is the
        // sum of the concatenated clip entries.
        let frames = seq(3, 2); // rows: [-1,-0.5], [0,0.5], [1,1.5]
        let g = MlpParams::from_layers(vec![Layer {
            weight: DenseMatrix::from_f64_rows(&[&[1.0], &[1.0], &[1.0], &[1.0]]).unwrap(),
            bias: vec![0.0],
        }])
        .unwrap();
        let clip = ClipIndex::new(vec![0, 2]).unwrap();
        let lt = local_temporal_feature(&frames, &[clip], &g).unwrap();
        let expected = -1.0 - 0.5 + 1.0 + 1.5;
        assert_eq!(lt, vec![expected]);
    }

    #[test]
    fn duplicated_clip_doubles_feature() {
        let frames = seq(5, 3);
        let g = MlpParams::<f64>::init(&[6, 4, 3], &mut rand::rng()).unwrap();
        let clip = ClipIndex::new(vec![1, 4]).unwrap();
        let one = local_temporal_feature(&frames, &[clip.clone()], &g).unwrap();
        let two = local_temporal_feature(&frames, &[clip.clone(), clip], &g).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_clip_index() {
        let frames = seq(3, 2);
        let g = MlpParams::<f64>::init(&[4, 2], &mut rand::rng()).unwrap();
        let clip = ClipIndex::new(vec![1, 3]).unwrap();
        let err = local_temporal_feature(&frames, &[clip], &g).unwrap_err();
        assert!(matches!(err, Error::Index { index: 3, frames: 3 }));
    }

    #[test]
    fn global_aggregations() {
        let bank = LocalFeatureBank::new(vec![2, 3], vec![vec![1.0f64, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(raw_global_feature(&bank), vec![1.0, 1.0]);
        assert_eq!(
            attentive_global_feature(&bank, &[0.25, 0.75]).unwrap(),
            vec![0.25, 0.75]
        );
        assert_eq!(attentive_global_feature(&bank, &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let err = attentive_global_feature(&bank, &[0.5, 0.6]).unwrap_err();
        assert!(matches!(err, Error::Normalization { .. }));

        let single = LocalFeatureBank::new(vec![2], vec![vec![3.0f64, -1.0]]).unwrap();
        assert_eq!(raw_global_feature(&single), vec![3.0, -1.0]);
        let zeros = LocalFeatureBank::new(vec![2, 3, 4], vec![vec![0.0f64; 2]; 3]).unwrap();
        assert_eq!(raw_global_feature(&zeros), vec![0.0, 0.0]);
        let equal = LocalFeatureBank::new(vec![2, 3, 4], vec![vec![0.5f64, 2.0]; 3]).unwrap();
        let t = attentive_global_feature(&equal, &[1.0 / 3.0; 3]).unwrap();
        assert!(t.iter().zip([0.5, 2.0]).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn mismatched_bank_dims() {
        assert!(LocalFeatureBank::new(vec![2, 3], vec![vec![1.0f64], vec![1.0, 2.0]]).is_err());
    }

    proptest! {
        #[test]
        fn local_feature_is_additive_over_disjoint_clip_lists(split in 1usize..5, seed in 0u64..1000) {
            use rand::SeedableRng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = seq(6, 2);
            let g = MlpParams::<f64>::init(&[4, 5, 3], &mut rng).unwrap();
            let all = sample_clips(6, 2, &cfg(6, SamplingMode::TrainRandom), seed, "v").unwrap().clips;
            let (a, b) = all.split_at(split);
            let whole = local_temporal_feature(&frames, &all, &g).unwrap();
            let pa = local_temporal_feature(&frames, a, &g).unwrap();
            let pb = local_temporal_feature(&frames, b, &g).unwrap();
            for i in 0..3 {
                prop_assert!((whole[i] - pa[i] - pb[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn attentive_feature_is_linear_in_bank(alpha in -3.0f64..3.0, w0 in 0.0f64..1.0) {
            let lt = vec![vec![1.0, -2.0], vec![0.5, 4.0]];
            let bank = LocalFeatureBank::new(vec![2, 3], lt.clone()).unwrap();
            let scaled = LocalFeatureBank::new(
                vec![2, 3],
                lt.iter().map(|v| v.iter().map(|x| x * alpha).collect()).collect(),
            ).unwrap();
            let w = [w0, 1.0 - w0];
            let t = attentive_global_feature(&bank, &w).unwrap();
            let ts = attentive_global_feature(&scaled, &w).unwrap();
            for i in 0..2 {
                prop_assert!((ts[i] - alpha * t[i]).abs() < 1e-9);
            }
        }
    }
}
