//! Command-line front end: simulation, leakage analysis, CGAN training and
//! generation, profiling attacks and the full comparison pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use tracegan::cgan::{build_cgan, generate, generate_allocated, train_cgan, CganConfig, CganPair};
use tracegan::io::{correlation_curve, dom_curve, ge_curve, loss_curve, read_header, read_traces, write_traces};
use tracegan::leakage::{cpa, cpa_own_labels, dpa, ValueMap};
use tracegan::pipeline::{run_pipeline, ExperimentConfig, GeConfig};
use tracegan::profiling::{attack_rank_curve, train_model, ClassifierConfig, GeReport};
use tracegan::rng::derive_seed;
use tracegan::simulate::{simulate, SimConfig};
use tracegan::{Error, TraceSet64};

#[derive(Parser)]
#[command(name = "tracegan", version, about = "CGAN trace augmentation for profiling side-channel attacks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress and summaries on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trace set into `<out>/traces.sctr`.
    Simulate,
    /// Correlation curve against a key hypothesis or the traces' labels.
    Cpa {
        #[arg(long)]
        traces: PathBuf,
        /// Key guess; defaults to the file's fixed key.
        #[arg(long, value_parser = parse_byte)]
        key: Option<u8>,
        #[arg(long, default_value = "hw")]
        map: ValueMap,
        /// Correlate with the stored labels instead of a key hypothesis.
        #[arg(long, conflicts_with = "key")]
        labels: bool,
    },
    /// Single-bit difference-of-means curve.
    Dpa {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, value_parser = parse_byte)]
        key: Option<u8>,
        #[arg(long, default_value_t = 0)]
        bit: u8,
    },
    /// Train a CGAN on a trace file; writes `<out>/cgan/` and the loss curve.
    TrainCgan {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Generate traces from a trained CGAN directory.
    Generate {
        #[arg(long)]
        cgan: PathBuf,
        #[arg(long)]
        count: usize,
        /// Generate only this class; otherwise counts follow the scheme's
        /// class allocation.
        #[arg(long)]
        label: Option<u8>,
    },
    /// Guessing entropy of one classifier trained on a profiling file.
    Attack {
        #[arg(long)]
        profiling: PathBuf,
        #[arg(long)]
        attack: PathBuf,
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
    /// Full original-versus-augmented comparison.
    Pipeline,
    /// Print a trace file's header.
    Inspect {
        #[arg(long)]
        traces: PathBuf,
    },
}

fn parse_byte(s: &str) -> Result<u8, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u8::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("`{s}` is not a byte: {e}"))
}

enum Failure {
    Config(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e)
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn config_or_default<T: serde::de::DeserializeOwned + Default>(g: &Global) -> CliResult<T> {
    g.config.as_deref().map_or_else(|| Ok(T::default()), load_json)
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value.as_deref().ok_or_else(|| Failure::Config(format!("--{flag} is required")))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

fn traces(path: &Path) -> CliResult<TraceSet64> {
    Ok(read_traces(path)?)
}

fn key_or_fixed(key: Option<u8>, ts: &TraceSet64) -> CliResult<u8> {
    key.or(ts.fixed_key())
        .ok_or_else(|| Failure::Config("no --key given and the file has no fixed key".into()))
}

fn manifest(command: &str, seed: Option<u64>, config: serde_json::Value, outputs: &[&str]) -> serde_json::Value {
    json!({
        "tool": "tracegan",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
        "artifacts": outputs,
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    let say = |msg: String| {
        if !g.quiet {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Simulate => {
            let path = required(&g.config, "config")?;
            let mut sim: SimConfig = load_json(path)?;
            if let Some(s) = g.seed {
                sim.seed = s;
            }
            let out = required(&g.out, "out")?;
            let ts: TraceSet64 = simulate(&sim)?;
            std::fs::create_dir_all(out).map_err(Error::from)?;
            write_traces(out.join("traces.sctr"), &ts)?;
            let cfg = serde_json::to_value(&sim).map_err(Error::from)?;
            write_json(&out.join("manifest.json"), &manifest("simulate", Some(sim.seed), cfg, &["traces.sctr"]))?;
            say(format!("wrote {} traces of {} samples to {}", ts.len(), ts.n_samples(), out.display()));
        }
        Command::Cpa {
            traces: path,
            key,
            map,
            labels,
        } => {
            let ts = traces(path)?;
            let corr = if *labels {
                cpa_own_labels(&ts)?
            } else {
                cpa(&ts, key_or_fixed(*key, &ts)?, *map)?
            };
            let out = required(&g.out, "out")?;
            correlation_curve(&corr)?.write(out)?;
            let (i, v) = corr.peak();
            say(format!("peak |rho| {:.4} at sample {i}", v.abs()));
        }
        Command::Dpa { traces: path, key, bit } => {
            let ts = traces(path)?;
            let d = dpa(&ts, key_or_fixed(*key, &ts)?, *bit)?;
            dom_curve(&d)?.write(required(&g.out, "out")?)?;
        }
        Command::TrainCgan { traces: path } => {
            let mut cfg: CganConfig = config_or_default(g)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let ts = traces(path)?;
            let out = required(&g.out, "out")?;
            let mut pair = build_cgan::<f64>(&cfg, ts.n_samples(), ts.scheme())?;
            let history = train_cgan(&mut pair, &ts, &cfg)?;
            std::fs::create_dir_all(out).map_err(Error::from)?;
            pair.save(out.join("cgan"))?;
            loss_curve(&history)?.write(out.join("cgan_loss.csv"))?;
            let c = serde_json::to_value(&cfg).map_err(Error::from)?;
            write_json(
                &out.join("manifest.json"),
                &manifest("train-cgan", Some(cfg.seed), c, &["cgan", "cgan_loss.csv"]),
            )?;
            say(format!(
                "trained {} epochs; final D loss {:.4}, G loss {:.4}",
                history.d_loss.len(),
                history.d_loss.last().copied().unwrap_or(f64::NAN),
                history.g_loss.last().copied().unwrap_or(f64::NAN)
            ));
        }
        Command::Generate { cgan, count, label } => {
            let pair = CganPair::<f64>::load(cgan)?;
            let seed = g.seed.unwrap_or(0);
            let ts = match label {
                Some(l) => generate(&pair, *l, *count, seed)?,
                None => generate_allocated(&pair, *count, seed)?,
            };
            write_traces(required(&g.out, "out")?, &ts)?;
            say(format!("generated {} traces, class counts {:?}", ts.len(), ts.class_histogram()));
        }
        Command::Attack {
            profiling,
            attack,
            validation,
            budget,
            repeats,
        } => {
            let mut cls: ClassifierConfig = config_or_default(g)?;
            let seed = g.seed.unwrap_or(0);
            cls.mlp.seed = derive_seed(seed, "classifier", 0);
            let train = traces(profiling)?;
            let test = traces(attack)?;
            let val = validation.as_deref().map(traces).transpose()?;
            let ge = GeConfig {
                max_attack_traces: *budget,
                repeats: *repeats,
            };
            if ge.repeats == 0 || ge.max_attack_traces == 0 || ge.max_attack_traces > test.len() {
                return Err(Failure::Config(format!(
                    "need 1 <= budget <= {} attack traces and at least one repeat",
                    test.len()
                )));
            }
            let model = train_model(&train, &cls, val.as_ref())?;
            let mut curves = Vec::new();
            let mut seeds = Vec::new();
            for r in 0..ge.repeats {
                let s = derive_seed(seed, "attack-order", r as u64);
                curves.push(attack_rank_curve(&model, &test, ge.max_attack_traces, s)?);
                seeds.push(s);
            }
            let report = GeReport::from_curves(curves, seeds)?;
            let out = required(&g.out, "out")?;
            std::fs::create_dir_all(out).map_err(Error::from)?;
            ge_curve(&report)?.write(out.join("ge.csv"))?;
            write_json(
                &out.join("ge_summary.json"),
                &json!({
                    "convergence_point": report.convergence_point,
                    "n_repeats": report.n_repeats,
                    "seeds": report.seeds,
                    "final_mean_rank": report.mean_rank_curve.last(),
                }),
            )?;
            say(format!("convergence point: {}", fmt_conv(report.convergence_point)));
        }
        Command::Pipeline => {
            let path = required(&g.config, "config")?;
            let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("run"));
            let report = run_pipeline(&cfg, &out)?;
            say(format!("original convergence: {}", fmt_conv(report.original.convergence_point)));
            if let Some(a) = &report.augmented {
                say(format!("augmented convergence: {}", fmt_conv(a.convergence_point)));
            }
            say(format!("artifacts in {}", out.display()));
        }
        Command::Inspect { traces: path } => {
            let h = read_header(path)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "magic": "SCTR",
                    "version": h.version,
                    "n_traces": h.n_traces,
                    "n_samples": h.n_samples,
                    "label_scheme": h.scheme.name(),
                    "label_scheme_code": h.scheme.code(),
                    "has_plaintext": h.has_plaintext,
                    "fixed_key": h.fixed_key,
                }))
                .expect("plain JSON")
            );
        }
    }
    Ok(())
}

fn fmt_conv(c: Option<usize>) -> String {
    c.map_or_else(|| "not converged".into(), |t| format!("{t} traces"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
