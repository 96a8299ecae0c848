//! Experiment configuration and the end-to-end comparison run: split,
//! optional augmentation, profiling and guessing entropy on the original and
//! augmented training sets, with every artifact written to a run directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cgan::{augment, build_cgan, generate_allocated, train_cgan, CganConfig, CganPair, LossHistory};
use crate::error::{Error, Result};
use crate::io::{correlation_curve, dom_curve, ge_curve, loss_curve, read_header, read_traces, write_traces};
use crate::leakage::{cpa_own_labels, difference_of_means};
use crate::profiling::{
    attack_rank_curve, augment_noise, augment_repeat, train_model, ClassifierConfig, GeReport, ProfilingModel,
    Selection, SplitSizes,
};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::simulate::{simulate, SimConfig};
use crate::trace::{sbox_lsb_from_gan_label, LabelScheme, TraceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Source {
    Simulate(SimConfig),
    /// A trace file with plaintexts and a fixed key.
    Ingest { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Augmentation {
    #[default]
    None,
    /// Resample `count` training traces with replacement.
    Repeat { count: usize },
    /// Resample `count` training traces and add Gaussian noise.
    Noise { sigma: f64, count: usize },
    /// Train the CGAN on the first `source_traces` training traces (all of
    /// them when absent) and add `count` generated traces.
    Cgan {
        count: usize,
        #[serde(default)]
        source_traces: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeConfig {
    pub max_attack_traces: usize,
    pub repeats: usize,
}

impl Default for GeConfig {
    fn default() -> Self {
        Self {
            max_attack_traces: 2000,
            repeats: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    #[serde(default)]
    pub split: SplitSizes,
    /// Relabels the source traces; keeps the source's labels when absent.
    #[serde(default)]
    pub label_scheme: Option<LabelScheme>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub cgan: CganConfig,
    #[serde(default)]
    pub augmentation: Augmentation,
    #[serde(default)]
    pub ge: GeConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<()> {
        let available = match &self.source {
            Source::Simulate(sim) => {
                sim.validate()?;
                sim.n_traces
            }
            Source::Ingest { path } => read_header(path)?.n_traces as usize,
        };
        self.split.check(available)?;
        if self.ge.repeats == 0 || self.ge.max_attack_traces == 0 {
            return Err(Error::Config("GE needs at least one repeat and one attack trace".into()));
        }
        if self.ge.max_attack_traces > self.split.test {
            return Err(Error::Config(format!(
                "GE budget {} exceeds the {} test traces",
                self.ge.max_attack_traces, self.split.test
            )));
        }
        self.classifier.mlp.validate()?;
        match self.augmentation {
            Augmentation::None => {}
            Augmentation::Repeat { count } | Augmentation::Noise { count, .. } | Augmentation::Cgan { count, .. }
                if count == 0 =>
            {
                return Err(Error::Config("augmentation count must be positive".into()))
            }
            Augmentation::Noise { sigma, .. } if !(sigma > 0.0) => {
                return Err(Error::Config("noise sigma must be positive".into()))
            }
            Augmentation::Cgan { source_traces, .. } => {
                self.cgan.validate()?;
                if let Some(n) = source_traces {
                    if n == 0 || n > self.split.train {
                        return Err(Error::Config(format!(
                            "CGAN source of {n} traces is not within the {} training traces",
                            self.split.train
                        )));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Loads or simulates the trace pool, relabelled if requested.
    pub fn load_pool<F: Scalar>(&self) -> Result<TraceSet<F>> {
        let pool = match &self.source {
            Source::Simulate(sim) => simulate(sim)?,
            Source::Ingest { path } => read_traces(path)?,
        };
        match self.label_scheme {
            Some(s) if s != pool.scheme() => pool.relabel(s),
            _ => Ok(pool),
        }
    }
}

/// Training set for one repeat under `plan`, plus the CGAN and its history
/// when one was trained.
pub fn augmented_training_set<F: Scalar>(
    train: &TraceSet<F>,
    plan: &Augmentation,
    cgan: &CganConfig,
    seed: u64,
) -> Result<(TraceSet<F>, Option<(CganPair<F>, LossHistory, TraceSet<F>)>)> {
    match *plan {
        Augmentation::None => Ok((train.clone(), None)),
        Augmentation::Repeat { count } => Ok((augment_repeat(train, count, seed)?, None)),
        Augmentation::Noise { sigma, count } => Ok((augment_noise(train, sigma, count, seed)?, None)),
        Augmentation::Cgan { count, source_traces } => {
            let source = train.slice(0..source_traces.unwrap_or(train.len()).min(train.len()));
            let cfg = CganConfig {
                seed: derive_seed(seed, "cgan", 0),
                ..cgan.clone()
            };
            let mut pair = build_cgan(&cfg, train.n_samples(), train.scheme()).map_err(|e| e.at_stage("build cgan", None))?;
            let history = train_cgan(&mut pair, &source, &cfg).map_err(|e| e.at_stage("train cgan", None))?;
            let generated = generate_allocated(&pair, count, derive_seed(seed, "generate", 0))?;
            Ok((augment(train, &generated)?, Some((pair, history, generated))))
        }
    }
}

/// Partition used for label-driven difference-of-means curves.
fn label_selector(ts: &TraceSet<impl Scalar>) -> Vec<bool> {
    ts.labels()
        .iter()
        .map(|&l| match ts.scheme() {
            LabelScheme::Lsb | LabelScheme::RawValue => l & 1 == 1,
            LabelScheme::HammingWeight => l > 4,
            LabelScheme::GanLabel => sbox_lsb_from_gan_label(l).unwrap_or(0) == 1,
        })
        .collect()
}

fn write_leakage_curves<F: Scalar>(dir: &Path, name: &str, ts: &TraceSet<F>) -> Result<Vec<String>> {
    let mut written = Vec::new();
    if let Ok(c) = cpa_own_labels(ts) {
        let file = format!("cpa_{name}.csv");
        correlation_curve(&c)?.write(dir.join(&file))?;
        written.push(file);
    }
    if let Ok(d) = difference_of_means(ts, &label_selector(ts), 0) {
        let file = format!("dpa_{name}.csv");
        dom_curve(&d)?.write(dir.join(&file))?;
        written.push(file);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub split_seed: u64,
    pub augment_seed: u64,
    pub classifier_seed: u64,
    pub attack_order_seed: u64,
    pub redraws: usize,
    pub original_selection: Option<Selection>,
    pub augmented_selection: Option<Selection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub original: GeReport,
    pub augmented: Option<GeReport>,
    pub repeats: Vec<RepeatRecord>,
}

impl PipelineReport {
    /// Original minus augmented convergence point, non-convergence counted
    /// as one past the budget.
    pub fn improvement(&self) -> Option<i64> {
        self.augmented
            .as_ref()
            .map(|a| self.original.convergence_or_budget() as i64 - a.convergence_or_budget() as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub repeat_seeds: Vec<RepeatRecord>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn selection<F: Scalar>(m: &ProfilingModel<F>) -> Option<Selection> {
    match m {
        ProfilingModel::Mlp(m) => Some(m.selection.clone()),
        ProfilingModel::GaussianTemplate(_) => None,
    }
}

fn save_model<F: Scalar>(m: &ProfilingModel<F>, path: &Path) -> Result<bool> {
    match m {
        ProfilingModel::Mlp(m) => {
            m.network.save(path)?;
            Ok(true)
        }
        ProfilingModel::GaussianTemplate(_) => Ok(false),
    }
}

/// Runs the configured comparison and writes artifacts under `out`.
/// Configuration problems are reported before any stage runs.
pub fn run_pipeline(config: &ExperimentConfig, out: impl AsRef<Path>) -> Result<PipelineReport> {
    config.validate()?;
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    let pool: TraceSet<f64> = config.load_pool().map_err(|e| e.at_stage("load traces", None))?;
    let seed = config.seed;
    let budget = config.ge.max_attack_traces;
    let augmenting = config.augmentation != Augmentation::None;
    let mut artifacts = Vec::new();

    let mut orig_curves = Vec::new();
    let mut aug_curves = Vec::new();
    let mut records = Vec::new();
    for r in 0..config.ge.repeats {
        let rdir_name = format!("repeat_{r:02}");
        let rdir = out.join(&rdir_name);
        std::fs::create_dir_all(&rdir)?;
        let ri = r as u64;
        let mut record = RepeatRecord {
            repeat: r,
            split_seed: derive_seed(seed, "split", ri),
            augment_seed: derive_seed(seed, "augment", ri),
            classifier_seed: derive_seed(seed, "classifier", ri),
            attack_order_seed: derive_seed(seed, "attack-order", ri),
            redraws: 0,
            original_selection: None,
            augmented_selection: None,
        };
        let split = config
            .split
            .draw(&pool, record.split_seed)
            .map_err(|e| e.at_stage("split", Some(r)))?;
        record.redraws = split.redraws;
        let mut classifier = config.classifier.clone();
        classifier.mlp.seed = record.classifier_seed;

        for f in write_leakage_curves(&rdir, "original", &split.train)? {
            artifacts.push(format!("{rdir_name}/{f}"));
        }
        let model = train_model(&split.train, &classifier, Some(&split.val))
            .map_err(|e| e.at_stage("train original model", Some(r)))?;
        if save_model(&model, &rdir.join("model_original.nn"))? {
            artifacts.push(format!("{rdir_name}/model_original.nn"));
        }
        record.original_selection = selection(&model);
        orig_curves.push(
            attack_rank_curve(&model, &split.test, budget, record.attack_order_seed)
                .map_err(|e| e.at_stage("attack original", Some(r)))?,
        );

        if augmenting {
            let (train_aug, cgan) =
                augmented_training_set(&split.train, &config.augmentation, &config.cgan, record.augment_seed)
                    .map_err(|e| e.at_stage("augment", Some(r)))?;
            if let Some((pair, history, generated)) = cgan {
                pair.save(rdir.join("cgan"))?;
                loss_curve(&history)?.write(rdir.join("cgan_loss.csv"))?;
                write_traces(rdir.join("generated.sctr"), &generated)?;
                artifacts.extend(
                    ["cgan", "cgan_loss.csv", "generated.sctr"]
                        .iter()
                        .map(|f| format!("{rdir_name}/{f}")),
                );
                for f in write_leakage_curves(&rdir, "generated", &generated)? {
                    artifacts.push(format!("{rdir_name}/{f}"));
                }
            }
            let model = train_model(&train_aug, &classifier, Some(&split.val))
                .map_err(|e| e.at_stage("train augmented model", Some(r)))?;
            if save_model(&model, &rdir.join("model_augmented.nn"))? {
                artifacts.push(format!("{rdir_name}/model_augmented.nn"));
            }
            record.augmented_selection = selection(&model);
            aug_curves.push(
                attack_rank_curve(&model, &split.test, budget, record.attack_order_seed)
                    .map_err(|e| e.at_stage("attack augmented", Some(r)))?,
            );
        }
        records.push(record);
    }

    let seeds: Vec<u64> = records.iter().map(|r| r.split_seed).collect();
    let original = GeReport::from_curves(orig_curves, seeds.clone())?;
    ge_curve(&original)?.write(out.join("ge_original.csv"))?;
    artifacts.push("ge_original.csv".into());
    let augmented = if augmenting {
        let a = GeReport::from_curves(aug_curves, seeds)?;
        ge_curve(&a)?.write(out.join("ge_augmented.csv"))?;
        artifacts.push("ge_augmented.csv".into());
        Some(a)
    } else {
        None
    };
    let report = PipelineReport {
        original,
        augmented,
        repeats: records,
    };
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    artifacts.push("report.json".into());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        master_seed: seed,
        config: config.clone(),
        repeat_seeds: report.repeats.clone(),
        artifacts,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(report)
}
