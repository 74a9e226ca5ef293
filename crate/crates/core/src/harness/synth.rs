//! Synthetic multi-domain benchmark whose classes are only separable by
//! temporal order.
//!
//! Every base class `c` owns a prototype pair `(u_c, v_c)`. Its videos show
//! `u_c` in the first half of the frames and `v_c` in the second half; the
//! confuser class `K + c` shows the same prototypes in reverse. Domains
//! differ by an additive bias and their noise level.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::features::write_features;
use super::manifest::{Dataset, Manifest, ManifestRecord, ManifestRole};
use crate::error::{Error, Result};
use crate::numkernel::DenseMatrix;
use crate::temporal::FrameFeatureSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub name: String,
    pub bias: Vec<f32>,
    pub sigma: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Base classes; the dataset has `2 · base_classes` labels.
    pub base_classes: usize,
    pub domains: Vec<DomainSpec>,
    pub frames: usize,
    pub feature_dim: usize,
    pub videos_per_class: usize,
    /// Fraction of each class held out as the test split.
    pub test_fraction: f64,
    /// Standard deviation of the prototype entries.
    pub prototype_scale: f32,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn class_count(&self) -> usize {
        2 * self.base_classes
    }

    /// A benchmark with `domains` domains whose biases are drawn as
    /// `N(0, bias_scale²)` from `seed`. The last domain is meant as target.
    pub fn with_random_biases(
        names: &[&str],
        base_classes: usize,
        frames: usize,
        feature_dim: usize,
        videos_per_class: usize,
        bias_scale: f32,
        sigma: f32,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b1a5);
        let domains = names
            .iter()
            .map(|name| DomainSpec {
                name: name.to_string(),
                bias: (0..feature_dim)
                    .map(|_| bias_scale * rng.sample::<f32, _>(StandardNormal))
                    .collect(),
                sigma,
            })
            .collect();
        Self {
            base_classes,
            domains,
            frames,
            feature_dim,
            videos_per_class,
            test_fraction: 0.25,
            prototype_scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_classes == 0 {
            return Err(Error::Config("at least one base class is required".into()));
        }
        if self.domains.len() < 2 {
            return Err(Error::Config("a synthetic benchmark needs at least 2 domains".into()));
        }
        if self.frames < 2 || self.feature_dim == 0 {
            return Err(Error::Config("need at least 2 frames and 1 feature".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!("test fraction {} outside [0, 1)", self.test_fraction)));
        }
        if self.test_split_size() == 0 || self.test_split_size() >= self.videos_per_class {
            return Err(Error::Config(format!(
                "{} videos per class cannot be split with test fraction {}",
                self.videos_per_class, self.test_fraction
            )));
        }
        for d in &self.domains {
            if !(d.sigma > 0.0) {
                return Err(Error::Config(format!("domain {} has noise scale {}", d.name, d.sigma)));
            }
            if d.bias.len() != self.feature_dim {
                return Err(Error::shape("domain bias", self.feature_dim, d.bias.len()));
            }
        }
        Ok(())
    }

    fn test_split_size(&self) -> usize {
        ((self.videos_per_class as f64) * self.test_fraction).round() as usize
    }
}

/// Class prototypes `(u_c, v_c)` for every base class.
pub fn prototypes(spec: &SyntheticSpec) -> Vec<(Vec<f32>, Vec<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.prototype_scale).expect("finite scale");
    let mut draw = || (0..spec.feature_dim).map(|_| normal.sample(&mut rng)).collect::<Vec<f32>>();
    (0..spec.base_classes).map(|_| (draw(), draw())).collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticDomain {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
}

/// Generates every domain in memory.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SyntheticDomain>> {
    spec.validate()?;
    let protos = prototypes(spec);
    let k = spec.base_classes;
    let first_half = spec.frames.div_ceil(2);
    let n_test = spec.test_split_size();

    spec.domains
        .iter()
        .enumerate()
        .map(|(m, domain)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1 + m as u64));
            let mut train = empty_dataset(&domain.name, spec.class_count());
            let mut test = empty_dataset(&domain.name, spec.class_count());
            for i in 0..spec.videos_per_class {
                for class in 0..spec.class_count() {
                    let (u, v) = &protos[class % k];
                    let (a, b) = if class < k { (u, v) } else { (v, u) };
                    let mut values = Vec::with_capacity(spec.frames * spec.feature_dim);
                    for f in 0..spec.frames {
                        let proto = if f < first_half { a } else { b };
                        for (p, bias) in proto.iter().zip(&domain.bias) {
                            let noise: f32 = rng.sample(StandardNormal);
                            values.push(p + bias + domain.sigma * noise);
                        }
                    }
                    let id = format!("{}_{class:02}_{i:04}", domain.name);
                    let frames = DenseMatrix::from_vec(spec.frames, spec.feature_dim, values)?;
                    let split = if i < spec.videos_per_class - n_test { &mut train } else { &mut test };
                    split.videos.push(FrameFeatureSequence::new(id, frames)?);
                    split.labels.as_mut().expect("labeled").push(class);
                }
            }
            Ok(SyntheticDomain {
                name: domain.name.clone(),
                train,
                test,
            })
        })
        .collect()
}

fn empty_dataset(domain: &str, class_count: usize) -> Dataset {
    Dataset {
        domain: domain.to_string(),
        class_count,
        videos: Vec::new(),
        labels: Some(Vec::new()),
    }
}

/// Writes each domain to `dir/<name>/*.tmnf` with the manifests
/// `<name>.train.tsv`, `<name>.test.tsv` and `<name>.unlabeled.tsv`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<Vec<SyntheticDomain>> {
    let domains = generate_synthetic(spec)?;
    for d in &domains {
        let sub = dir.join(&d.name);
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let mut manifests = Vec::new();
        for split in [&d.train, &d.test] {
            let mut records = Vec::with_capacity(split.len());
            for (video, &label) in split.videos.iter().zip(split.labels.as_ref().expect("labeled")) {
                let rel = format!("{}/{}.tmnf", d.name, video.video_id);
                write_features(&dir.join(&rel), video)?;
                records.push(ManifestRecord {
                    feature_path: rel,
                    label: Some(label),
                    domain: d.name.clone(),
                });
            }
            manifests.push(Manifest {
                class_count: spec.class_count(),
                records,
                role: ManifestRole::Source,
            });
        }
        manifests[0].write(&dir.join(format!("{}.train.tsv", d.name)))?;
        let mut test = manifests[1].clone();
        test.role = ManifestRole::TargetTest;
        test.write(&dir.join(format!("{}.test.tsv", d.name)))?;
        manifests[0].unlabeled().write(&dir.join(format!("{}.unlabeled.tsv", d.name)))?;
    }
    Ok(domains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::manifest::load_manifest_dataset;

    fn small(frames: usize) -> SyntheticSpec {
        SyntheticSpec::with_random_biases(&["a", "b", "t"], 2, frames, 3, 8, 1.0, 0.5, 11)
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_synthetic(&small(4)).unwrap();
        let b = generate_synthetic(&small(4)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (v, w) in x.train.videos.iter().zip(&y.train.videos) {
                assert_eq!(v.frames(), w.frames());
            }
        }
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_synthetic(&small(4), dir1.path()).unwrap();
        write_synthetic(&small(4), dir2.path()).unwrap();
        for name in ["a/a_03_0001.tmnf", "t.unlabeled.tsv", "b.test.tsv"] {
            assert_eq!(
                fs::read(dir1.path().join(name)).unwrap(),
                fs::read(dir2.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn split_sizes_and_labels() {
        let spec = small(4);
        let domains = generate_synthetic(&spec).unwrap();
        assert_eq!(domains.len(), 3);
        let d = &domains[0];
        assert_eq!(d.train.len(), 6 * 4);
        assert_eq!(d.test.len(), 2 * 4);
        assert_eq!(d.train.class_count, 4);
    }

    #[test]
    fn odd_frame_count_puts_extra_frame_on_first_prototype() {
        let mut spec = small(5);
        for d in &mut spec.domains {
            d.sigma = 1e-6;
            d.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let protos = prototypes(&spec);
        let video = &generate_synthetic(&spec).unwrap()[0].train.videos[0];
        for f in 0..5 {
            let want = if f < 3 { &protos[0].0 } else { &protos[0].1 };
            for (x, p) in video.frames().row(f).iter().zip(want) {
                assert!((x - p).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn manifests_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small(4);
        let domains = write_synthetic(&spec, dir.path()).unwrap();
        let train = load_manifest_dataset(&dir.path().join("a.train.tsv"), ManifestRole::Source).unwrap();
        assert_eq!(train.labels, domains[0].train.labels);
        assert_eq!(train.videos[5].frames(), domains[0].train.videos[5].frames());
        let target = load_manifest_dataset(&dir.path().join("t.unlabeled.tsv"), ManifestRole::TargetTrain).unwrap();
        assert!(target.labels.is_none());
        assert!(load_manifest_dataset(&dir.path().join("t.test.tsv"), ManifestRole::TargetTest).is_ok());
    }

    #[test]
    fn class_and_confuser_share_frame_mean_expectation() {
        let mut spec = small(4);
        spec.videos_per_class = 400;
        let d = &generate_synthetic(&spec).unwrap()[0].train;
        let labels = d.labels.as_ref().unwrap();
        let mean_of = |class: usize| {
            let mut acc = vec![0.0f64; 3];
            let mut n = 0.0;
            for (v, &l) in d.videos.iter().zip(labels) {
                if l == class {
                    for (a, x) in acc.iter_mut().zip(v.frame_mean()) {
                        *a += x as f64;
                    }
                    n += 1.0;
                }
            }
            acc.into_iter().map(|a| a / n).collect::<Vec<_>>()
        };
        let (c, confuser) = (mean_of(0), mean_of(2));
        for (x, y) in c.iter().zip(&confuser) {
            // standard error of a 300-video mean of 4-frame averages at sigma 0.5
            assert!((x - y).abs() < 0.1, "{c:?} vs {confuser:?}");
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = small(4);
        spec.domains[1].sigma = 0.0;
        assert!(generate_synthetic(&spec).is_err());
        let mut spec = small(4);
        spec.domains.truncate(1);
        assert!(generate_synthetic(&spec).is_err());
    }
}
