//! Class maps of the Daily-DA and Sports-DA benchmarks and the manifest
//! builder that applies them to raw dataset listings.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::manifest::{Manifest, ManifestRecord, ManifestRole};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Daily,
    Sports,
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "daily" | "daily-da" => Ok(Benchmark::Daily),
            "sports" | "sports-da" => Ok(Benchmark::Sports),
            other => Err(Error::Config(format!("unknown benchmark `{other}`"))),
        }
    }
}

/// One shared class and the raw labels it absorbs in each dataset.
pub struct ClassEntry {
    pub name: &'static str,
    /// Raw labels per dataset, in [`Benchmark::datasets`] order.
    pub raw: &'static [&'static [&'static str]],
}

const DAILY_DATASETS: &[&str] = &["arid", "hmdb51", "mit", "kinetics"];

const DAILY: &[ClassEntry] = &[
    ClassEntry {
        name: "Drink",
        raw: &[&["Drink"], &["drink"], &["drinking"], &["drinking shots"]],
    },
    ClassEntry {
        name: "Jump",
        raw: &[
            &["Jump"],
            &["jump"],
            &["jumping"],
            &["jumping bicycle", "jumping into pool", "jumping jacks"],
        ],
    },
    ClassEntry {
        name: "Pick",
        raw: &[&["Pick"], &["pick"], &["picking"], &["picking fruit"]],
    },
    ClassEntry {
        name: "Pour",
        raw: &[&["Pour"], &["pour"], &["pouring"], &["pouring beer"]],
    },
    ClassEntry {
        name: "Push",
        raw: &[
            &["Push"],
            &["push"],
            &["pushing"],
            &[
                "pushing car",
                "pushing cart",
                "pushing wheelbarrow",
                "pushing wheelchair",
            ],
        ],
    },
    ClassEntry {
        name: "Run",
        raw: &[&["Run"], &["run"], &["running"], &["running on treadmill"]],
    },
    ClassEntry {
        name: "Walk",
        raw: &[
            &["Walk"],
            &["walk"],
            &["walking"],
            &["walking the dog", "walking through snow"],
        ],
    },
    ClassEntry {
        name: "Wave",
        raw: &[&["Wave"], &["wave"], &["waving"], &["waving hand"]],
    },
];

const SPORTS_DATASETS: &[&str] = &["ucf101", "sports1m", "kinetics"];

macro_rules! sports {
    ($( $name:literal => [$ucf:literal], [$s1m:literal], [$($k:literal),+] );+ $(;)?) => {
        &[$( ClassEntry { name: $name, raw: &[&[$ucf], &[$s1m], &[$($k),+]] } ),+]
    };
}

const SPORTS: &[ClassEntry] = sports![
    "Archery" => ["Archery"], ["archery"], ["archery"];
    "Baseball Pitch" => ["Baseball Pitch"], ["baseball"], ["catching or throwing baseball", "hitting baseball"];
    "Basketball Shooting" => ["Basketball Shooting"], ["basketball"], ["playing basketball", "shooting basketball"];
    "Biking" => ["Biking"], ["bicycle"], ["riding a bike"];
    "Bowling" => ["Bowling"], ["bowling"], ["bowling"];
    "Breaststroke" => ["Breaststroke"], ["breaststroke"], ["swimming breast stroke"];
    "Diving" => ["Diving"], ["diving"], ["springboard diving"];
    "Fencing" => ["Fencing"], ["fencing"], ["fencing (sport)"];
    "Field Hockey Penalty" => ["Field Hockey Penalty"], ["field hockey"], ["playing field hockey"];
    "Floor Gymnastics" => ["Floor Gymnastics"], ["floor (gymnastics)"], ["gymnastics tumbling"];
    "Golf Swing" => ["Golf Swing"], ["golf"], ["golf chipping", "golf driving", "golf putting"];
    "Horse Race" => ["Horse Race"], ["horse racing"], ["riding or walking with horse"];
    "Kayaking" => ["Kayaking"], ["kayaking"], ["canoeing or kayaking"];
    "Rock Climbing Indoor" => ["Rock Climbing Indoor"], ["rock climbing"], ["rock climbing"];
    "Rope Climbing" => ["Rope Climbing"], ["rope climbing"], ["climbing a rope"];
    "Skate Boarding" => ["Skate Boarding"], ["skateboarding"], ["skateboarding"];
    "Skiing" => ["Skiing"], ["skiing"], ["skiing crosscountry", "skiing mono"];
    "Sumo Wrestling" => ["Sumo Wrestling"], ["sumo"], ["wrestling"];
    "Surfing" => ["Surfing"], ["surfing"], ["surfing water"];
    "Tai Chi" => ["Tai Chi"], ["t'ai chi ch'uan"], ["tai chi"];
    "Tennis Swing" => ["Tennis Swing"], ["tennis"], ["playing tennis"];
    "Trampoline Jumping" => ["Trampoline Jumping"], ["trampolining"], ["bouncing on trampoline"];
    "Volleyball Spiking" => ["Volleyball Spiking"], ["volleyball"], ["playing volleyball"];
];

impl Benchmark {
    pub fn classes(&self) -> &'static [ClassEntry] {
        match self {
            Benchmark::Daily => DAILY,
            Benchmark::Sports => SPORTS,
        }
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        self.classes().iter().map(|c| c.name).collect()
    }

    pub fn datasets(&self) -> &'static [&'static str] {
        match self {
            Benchmark::Daily => DAILY_DATASETS,
            Benchmark::Sports => SPORTS_DATASETS,
        }
    }

    /// Canonical dataset name for a user-supplied key such as `K`,
    /// `Kinetics` or `hmdb`.
    pub fn canonical_dataset(&self, key: &str) -> Result<&'static str> {
        let k = normalize(key);
        let alias = match k.as_str() {
            "a" | "arid" => "arid",
            "h" | "hmdb" | "hmdb51" => "hmdb51",
            "m" | "mit" | "moments" | "momentsintime" => "mit",
            "k" | "kinetics" | "kinetics600" => "kinetics",
            "u" | "ucf" | "ucf101" => "ucf101",
            "s" | "sports1m" => "sports1m",
            _ => "",
        };
        self.datasets()
            .iter()
            .copied()
            .find(|&d| d == alias)
            .ok_or_else(|| Error::Config(format!("dataset `{key}` is not part of the {self:?} benchmark")))
    }

    /// Shared class index for a raw label of `dataset`, if it is mapped.
    pub fn map_label(&self, dataset: &str, raw_label: &str) -> Result<Option<usize>> {
        let canonical = self.canonical_dataset(dataset)?;
        let slot = self
            .datasets()
            .iter()
            .position(|&d| d == canonical)
            .expect("canonical dataset");
        let wanted = normalize(raw_label);
        Ok(self
            .classes()
            .iter()
            .position(|c| c.raw[slot].iter().any(|r| normalize(r) == wanted)))
    }
}

/// Lowercase alphanumerics only, so `BaseballPitch`, `baseball_pitch` and
/// `Baseball Pitch` compare equal.
fn normalize(label: &str) -> String {
    label
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// `(raw_label, feature_path)` records of one dataset.
pub type Listing = Vec<(String, String)>;

/// Maps raw listings onto the benchmark's shared classes and emits one
/// source-role manifest per dataset, keyed by canonical dataset name.
/// Unmapped raw labels are dropped.
pub fn build_manifest(
    benchmark: Benchmark,
    listings: &BTreeMap<String, Listing>,
) -> Result<BTreeMap<String, Manifest>> {
    if listings.is_empty() {
        return Err(Error::Config("no dataset listings given".into()));
    }
    let classes = benchmark.classes();
    let mut out = BTreeMap::new();
    for (key, listing) in listings {
        let dataset = benchmark.canonical_dataset(key)?;
        let mut counts = vec![0usize; classes.len()];
        let mut records = Vec::new();
        for (raw, path) in listing {
            if let Some(label) = benchmark.map_label(dataset, raw)? {
                counts[label] += 1;
                records.push(ManifestRecord {
                    feature_path: path.clone(),
                    label: Some(label),
                    domain: dataset.to_string(),
                });
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Completeness {
                class: classes[empty].name.to_string(),
                domain: dataset.to_string(),
            });
        }
        if out
            .insert(
                dataset.to_string(),
                Manifest {
                    class_count: classes.len(),
                    records,
                    role: ManifestRole::Source,
                },
            )
            .is_some()
        {
            return Err(Error::Config(format!("dataset `{dataset}` listed twice")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts() {
        assert_eq!(Benchmark::Daily.classes().len(), 8);
        assert_eq!(Benchmark::Sports.classes().len(), 23);
        for b in [Benchmark::Daily, Benchmark::Sports] {
            for c in b.classes() {
                assert_eq!(c.raw.len(), b.datasets().len(), "{}", c.name);
            }
        }
    }

    #[test]
    fn many_to_one_kinetics_labels() {
        let d = Benchmark::Daily;
        let jump = d.class_names().iter().position(|&n| n == "Jump").unwrap();
        assert_eq!(d.map_label("kinetics", "jumping bicycle").unwrap(), Some(jump));
        assert_eq!(d.map_label("K", "jumping jacks").unwrap(), Some(jump));
        assert_eq!(d.map_label("kinetics", "jumping").unwrap(), None);
        assert_eq!(d.map_label("mit", "jumping").unwrap(), Some(jump));

        let s = Benchmark::Sports;
        let golf = s.class_names().iter().position(|&n| n == "Golf Swing").unwrap();
        assert_eq!(s.map_label("kinetics", "golf putting").unwrap(), Some(golf));
        let tai_chi = s.class_names().iter().position(|&n| n == "Tai Chi").unwrap();
        assert_eq!(s.map_label("sports1m", "t'ai chi ch'uan").unwrap(), Some(tai_chi));
        assert_eq!(s.map_label("ucf101", "TaiChi").unwrap(), Some(tai_chi));
        assert!(s.map_label("arid", "Drink").is_err());
    }

    fn listing(labels: &[&str]) -> Listing {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.to_string(), format!("v{i}.tmnf")))
            .collect()
    }

    #[test]
    fn builds_complete_manifests_and_drops_unmapped() {
        let hmdb: Vec<&str> = ["drink", "jump", "pick", "pour", "push", "run", "walk", "wave", "kiss"].to_vec();
        let mut listings = BTreeMap::new();
        listings.insert("H".to_string(), listing(&hmdb));
        let out = build_manifest(Benchmark::Daily, &listings).unwrap();
        let m = &out["hmdb51"];
        assert_eq!(m.class_count, 8);
        assert_eq!(m.records.len(), 8);
        assert!(m.records.iter().all(|r| r.domain == "hmdb51"));
    }

    #[test]
    fn missing_class_is_a_completeness_error() {
        let mut listings = BTreeMap::new();
        listings.insert("arid".to_string(), listing(&["Drink", "Jump"]));
        match build_manifest(Benchmark::Daily, &listings).unwrap_err() {
            Error::Completeness { class, domain } => {
                assert_eq!(class, "Pick");
                assert_eq!(domain, "arid");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
