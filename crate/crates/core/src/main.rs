use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use taman::alignment::{AttentionPolicy, ObjectiveConfig};
use taman::ensemble::EnsembleMode;
use taman::harness::gradcheck::{tiny_instance, TINY_EPS};
use taman::harness::metrics::write_metrics;
use taman::harness::{
    build_manifest, evaluate, format_table, load_manifest_dataset, run_ablation, train, write_synthetic,
    AdaptationTask, Benchmark, Checkpoint, ManifestRole, RunConfig, SyntheticSpec, Variant, WeightSource,
};
use taman::{Error, Result};

#[derive(Parser)]
#[command(name = "taman", version, about = "Multi-source video domain adaptation on frame features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain benchmark.
    Synth(SynthArgs),
    /// Build per-domain manifests from raw dataset listings.
    Manifest(ManifestArgs),
    /// Train a model on labeled sources and an unlabeled target.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled test manifest.
    Eval(EvalArgs),
    /// Run ablation variants over several seeds.
    Ablate(AblateArgs),
    /// Verify the objective's gradient on a tiny instance.
    Gradcheck(GradcheckArgs),
}

/// Run configuration: a `key=value` file overridden by flags.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lambda_df: Option<String>,
    #[arg(long)]
    lambda_dt: Option<String>,
    /// Comma list or range such as `2-8`, or `all`.
    #[arg(long)]
    scales: Option<String>,
    #[arg(long)]
    z_max: Option<String>,
    #[arg(long)]
    moments: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    temporal_dim: Option<String>,
    #[arg(long)]
    lr_decay_epochs: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("lr", &self.lr),
            ("momentum", &self.momentum),
            ("weight_decay", &self.weight_decay),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lambda_df", &self.lambda_df),
            ("lambda_dt", &self.lambda_dt),
            ("scales", &self.scales),
            ("z_max", &self.z_max),
            ("moments", &self.moments),
            ("seed", &self.seed),
            ("variant", &self.variant),
            ("hidden", &self.hidden),
            ("temporal_dim", &self.temporal_dim),
            ("lr_decay_epochs", &self.lr_decay_epochs),
            ("seeds", &self.seeds),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Domain names; the last one is meant as target.
    #[arg(long, value_delimiter = ',', default_value = "s1,s2,t")]
    domains: Vec<String>,
    /// Base classes; each gets a confuser, doubling the label count.
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    features: usize,
    #[arg(long, default_value_t = 200)]
    videos_per_class: usize,
    /// Standard deviation of the per-domain bias entries.
    #[arg(long, default_value_t = 2.0)]
    bias: f32,
    #[arg(long, default_value_t = 0.5)]
    sigma: f32,
    #[arg(long, default_value_t = 0.25)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ManifestArgs {
    /// `daily` or `sports`.
    #[arg(long)]
    benchmark: Benchmark,
    /// `dataset=listing.tsv`, where each listing line is `raw_label<TAB>path`.
    #[arg(long = "listing", required = true)]
    listings: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Labeled source manifest; repeat once per source domain.
    #[arg(long = "source", required = true)]
    sources: Vec<PathBuf>,
    /// Unlabeled target-train manifest.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines metrics file; stdout when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled test manifest.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "certainty")]
    ensemble: EnsembleMode,
    /// Per-source accuracies for the `source_accuracy` ensemble.
    #[arg(long, value_delimiter = ',')]
    source_accuracies: Option<Vec<f64>>,
    /// Attention weights to use: `target` or `source:<j>`.
    #[arg(long, default_value = "target")]
    weights: String,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long = "source", required = true)]
    sources: Vec<PathBuf>,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    target_test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "full,no_confidence,no_dominance,no_local_attention,source_only")]
    variants: Vec<Variant>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TINY_EPS)]
    eps: f64,
}

fn parse_weights(s: &str) -> Result<WeightSource> {
    match s.split_once(':') {
        None if s == "target" => Ok(WeightSource::Target),
        Some(("source", j)) => j
            .parse()
            .map(WeightSource::Source)
            .map_err(|_| Error::Config(format!("bad source index `{j}`"))),
        _ => Err(Error::Config(format!("unknown weights `{s}`"))),
    }
}

fn load_sources(paths: &[PathBuf]) -> Result<Vec<taman::harness::Dataset>> {
    paths.iter().map(|p| load_manifest_dataset(p, ManifestRole::Source)).collect()
}

fn read_listing(path: &Path) -> Result<taman::harness::Listing> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            line.split_once('\t')
                .map(|(label, p)| (label.to_string(), p.to_string()))
                .ok_or_else(|| Error::Config(format!("{}:{}: expected raw_label<TAB>path", path.display(), n + 1)))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    match cli.command {
        Command::Synth(a) => {
            let names: Vec<&str> = a.domains.iter().map(String::as_str).collect();
            let mut spec = SyntheticSpec::with_random_biases(
                &names,
                a.classes,
                a.frames,
                a.features,
                a.videos_per_class,
                a.bias,
                a.sigma,
                a.seed,
            );
            spec.test_fraction = a.test_fraction;
            let domains = write_synthetic(&spec, &a.out)?;
            for d in domains {
                println!("{}: {} train, {} test", d.name, d.train.len(), d.test.len());
            }
        }
        Command::Manifest(a) => {
            let mut listings = BTreeMap::new();
            for item in &a.listings {
                let (name, path) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("expected dataset=path, got `{item}`")))?;
                listings.insert(name.to_string(), read_listing(Path::new(path))?);
            }
            fs::create_dir_all(&a.out).map_err(|e| Error::Io {
                path: a.out.clone(),
                source: e,
            })?;
            for (domain, manifest) in build_manifest(a.benchmark, &listings)? {
                let path = a.out.join(format!("{domain}.tsv"));
                manifest.write(&path)?;
                println!("{}: {} videos", path.display(), manifest.records.len());
            }
        }
        Command::Train(a) => {
            let cfg = a.config.resolve()?;
            eprint!("{}", cfg.to_text());
            let sources = load_sources(&a.sources)?;
            let target = load_manifest_dataset(&a.target, ManifestRole::TargetTrain)?;
            let mut sink: Box<dyn Write> = match &a.metrics {
                Some(p) => Box::new(fs::File::create(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?),
                None => Box::new(stdout.lock()),
            };
            let mut io_error = None;
            train(&cfg, &sources, &target, Some(&a.out), |m| {
                if let Err(e) = write_metrics(&mut sink, std::slice::from_ref(m)).and_then(|_| sink.flush()) {
                    io_error.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_error {
                return Err(Error::Io {
                    path: a.metrics.unwrap_or_default(),
                    source: e,
                });
            }
        }
        Command::Eval(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let test = load_manifest_dataset(&a.test, ManifestRole::TargetTest)?;
            let report = evaluate(
                &ck,
                &test,
                a.ensemble,
                a.source_accuracies.as_deref(),
                parse_weights(&a.weights)?,
            )?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Command::Ablate(a) => {
            let cfg = a.config.resolve()?;
            let task = AdaptationTask {
                sources: load_sources(&a.sources)?,
                target_train: load_manifest_dataset(&a.target, ManifestRole::TargetTrain)?,
                target_test: load_manifest_dataset(&a.target_test, ManifestRole::TargetTest)?,
            };
            let rows = run_ablation(&cfg, &a.variants, &task)?;
            print!("{}", format_table(&rows));
        }
        Command::Gradcheck(a) => {
            let inst = tiny_instance(a.seed, AttentionPolicy::Full, ObjectiveConfig::default())?;
            let report = inst.check(a.eps)?;
            for t in &report.tensors {
                println!(
                    "{:<28} {:.3e}  analytic {:+.6e} numeric {:+.6e}",
                    t.name, t.max_rel_error, t.worst_pair.0, t.worst_pair.1
                );
            }
            println!(
                "max relative error {:.3e} (tolerance {:.0e}): {}",
                report.max_rel_error,
                report.tolerance,
                if report.pass { "pass" } else { "FAIL" }
            );
            if !report.pass {
                return Err(Error::Data("gradient check failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
