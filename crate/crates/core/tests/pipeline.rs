use std::path::Path;

use tracegan::cgan::CganConfig;
use tracegan::pipeline::{run_pipeline, Augmentation, ExperimentConfig, GeConfig, RunManifest, Source};
use tracegan::profiling::{ClassifierConfig, MlpHyper, SplitSizes};
use tracegan::simulate::SimConfig;

fn small_cgan_config() -> ExperimentConfig {
    ExperimentConfig {
        source: Source::Simulate(SimConfig::standard(800, 0x2b, 11)),
        split: SplitSizes {
            d1: 600,
            train: 150,
            val: 100,
            test: 200,
            max_redraws: 0,
        },
        label_scheme: None,
        classifier: ClassifierConfig {
            mlp: MlpHyper {
                epoch_checkpoints: vec![2, 4],
                val_budget: 50,
                ..MlpHyper::default()
            },
            ..ClassifierConfig::default()
        },
        cgan: CganConfig {
            epochs: 3,
            g_hidden: vec![16],
            d_hidden: vec![16],
            latent_dim: 8,
            label_embedding_dim: 4,
            ..CganConfig::default()
        },
        augmentation: Augmentation::Cgan {
            count: 60,
            source_traces: None,
        },
        ge: GeConfig {
            max_attack_traces: 80,
            repeats: 2,
        },
        seed: 5,
    }
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    let p = dir.join(rel);
    if p.is_dir() {
        let mut names: Vec<_> = std::fs::read_dir(&p).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        names
            .into_iter()
            .flat_map(|n| std::fs::read(p.join(n)).unwrap())
            .collect()
    } else {
        std::fs::read(p).unwrap()
    }
}

#[test]
fn rerun_under_manifest_is_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(&small_cgan_config(), a.path()).unwrap();
    assert!(first.augmented.is_some());
    assert_eq!(first.repeats.len(), 2);
    assert!(first.repeats.iter().all(|r| r.original_selection.is_some()));

    let manifest = RunManifest::load(a.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.master_seed, 5);
    for needed in ["report.json", "ge_original.csv", "ge_augmented.csv", "repeat_00/cgan", "repeat_01/generated.sctr"] {
        assert!(manifest.artifacts.iter().any(|f| f == needed), "{needed}");
    }
    let second = run_pipeline(&manifest.config, b.path()).unwrap();
    assert_eq!(first, second);
    for f in &manifest.artifacts {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
}

#[test]
fn config_file_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    let cfg = small_cgan_config();
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        n += 1;
    }
    assert!(n >= 3);
}
