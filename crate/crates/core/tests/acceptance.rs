//! Acceptance run over the simulation experiments and the property gate.
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero when any
//! criterion fails. Expect roughly half an hour on a single core.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::seq::SliceRandom;
use tracegan::cgan::{augment, build_cgan, generate_allocated, train_cgan, CganConfig, CganPair, ScalerKind};
use tracegan::leakage::{cpa_own_labels, CorrelationTrace};
use tracegan::profiling::{
    attack_rank_curve, augment_repeat, convergence_point, train_model, ClassifierConfig, ClassifierKind, GeReport,
    MlpHyper, Split, SplitSizes,
};
use tracegan::rng::{derive_seed, seeded};
use tracegan::simulate::{simulate, LeakModel, SimConfig};
use tracegan::{LabelScheme, TraceSet};

const MASTER: u64 = 20_240_917;
const KEY: u8 = 0x2b;
const REPEATS: usize = 10;
const BUDGET: usize = 2000;
/// Uniform ranks have sd 73.9; 100 repeats put the [100, 155] band at about 3.7 sd.
const SHUFFLED_REPEATS: usize = 100;

type Ts = TraceSet<f64>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {id} [{tag}] {name}: {}", o.detail);
}

fn sim(label: LabelScheme, jitter: Option<usize>) -> Ts {
    let mut cfg = SimConfig::standard(10_000, KEY, derive_seed(MASTER, "pool", 0));
    cfg.leak_model = LeakModel::HammingWeight;
    cfg.label_scheme = label;
    cfg.jitter = jitter;
    simulate(&cfg).expect("simulation")
}

fn splits(pool: &Ts) -> Vec<Split<f64>> {
    let sizes = SplitSizes {
        max_redraws: 50,
        ..SplitSizes::default()
    };
    (0..REPEATS)
        .map(|r| sizes.draw(pool, derive_seed(MASTER, "split", r as u64)).expect("split"))
        .collect()
}

fn classifier(r: usize) -> ClassifierConfig {
    ClassifierConfig {
        mlp: MlpHyper {
            learning_rates: vec![1e-3],
            batch_sizes: vec![50],
            epoch_checkpoints: vec![10, 20, 30, 50, 80],
            val_budget: 500,
            seed: derive_seed(MASTER, "classifier", r as u64),
            ..MlpHyper::default()
        },
        ..ClassifierConfig::default()
    }
}

fn train_gan(train: &Ts, tag: &str, r: usize) -> CganPair<f64> {
    let cfg = CganConfig {
        epochs: 300,
        scaler: ScalerKind::PerSample,
        seed: derive_seed(MASTER, tag, r as u64),
        ..CganConfig::default()
    };
    let mut pair = build_cgan(&cfg, train.n_samples(), train.scheme()).expect("cgan build");
    train_cgan(&mut pair, train, &cfg).expect("cgan training");
    pair
}

fn generated(pair: &CganPair<f64>, n: usize, tag: &str, r: usize) -> Ts {
    generate_allocated(pair, n, derive_seed(MASTER, &format!("generate-{tag}-{n}"), r as u64)).expect("generate")
}

/// GE over the repeats; every arm attacks the same test set in the same order.
fn ge(splits: &[Split<f64>], mut train_for: impl FnMut(usize, &Split<f64>) -> Ts) -> (GeReport, f64) {
    let t = Instant::now();
    let curves = splits
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let train = train_for(r, s);
            let model = train_model(&train, &classifier(r), Some(&s.val)).expect("profiling model");
            attack_rank_curve(&model, &s.test, BUDGET, derive_seed(MASTER, "attack-order", r as u64)).expect("attack")
        })
        .collect();
    let seeds = (0..splits.len() as u64).map(|r| derive_seed(MASTER, "split", r)).collect();
    (GeReport::from_curves(curves, seeds).expect("ge"), t.elapsed().as_secs_f64())
}

fn conv(g: &GeReport) -> usize {
    g.convergence_or_budget()
}

fn describe(name: &str, g: &GeReport) {
    let per: Vec<String> = g
        .rank_curves
        .iter()
        .map(|c| {
            let f: Vec<f64> = c.iter().map(|&x| x as f64).collect();
            convergence_point(&f).map_or("-".into(), |t| t.to_string())
        })
        .collect();
    let m = &g.mean_rank_curve;
    let conv = g.convergence_point.map_or("none".into(), |t| t.to_string());
    println!(
        "    {name:<14} conv {conv:>5}  GE@100/500/1000/2000 {:6.2} {:6.2} {:6.2} {:6.2}  per repeat: {}",
        m[99],
        m[499],
        m[999],
        m[BUDGET - 1],
        per.join(" ")
    );
}

fn cpa(ts: &Ts) -> CorrelationTrace<f64> {
    cpa_own_labels(ts).expect("cpa")
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn property_suite() -> Outcome {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let target = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("property-gate");
    let out = Command::new(cargo)
        .args(["test", "-p", "tracegan", "--lib", "--test", "properties", "--test", "pipeline"])
        .env("CARGO_TARGET_DIR", target)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output();
    match out {
        Ok(o) => {
            let text = String::from_utf8_lossy(&o.stdout);
            let summary: Vec<&str> = text.lines().filter(|l| l.starts_with("test result")).collect();
            Outcome {
                pass: o.status.success(),
                detail: if o.status.success() {
                    summary.join("; ")
                } else {
                    format!("{}\n{}", text, String::from_utf8_lossy(&o.stderr))
                },
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: format!("could not run cargo: {e}"),
        },
    }
}

fn perfect_model_sanity(pool: &Ts) -> Outcome {
    // zero-noise identity leakage with a raw-value template knows z exactly
    let mut cfg = SimConfig::standard(10_000, KEY, derive_seed(MASTER, "oracle-pool", 0));
    cfg.noise_sigma = 0.0;
    cfg.label_scheme = LabelScheme::RawValue;
    let clean: Ts = simulate(&cfg).expect("simulation");
    let oracle_cfg = ClassifierConfig {
        kind: ClassifierKind::GaussianTemplate,
        window: Some(25..26),
        ..ClassifierConfig::default()
    };
    let oracle = train_model(&clean.slice(0..5000), &oracle_cfg, None).expect("oracle");
    let curves = (0..REPEATS)
        .map(|r| {
            let test = clean.slice(5000..10_000);
            attack_rank_curve(&oracle, &test, BUDGET, derive_seed(MASTER, "oracle-order", r as u64)).unwrap()
        })
        .collect();
    let oracle_ge = GeReport::from_curves(curves, vec![0; REPEATS]).unwrap();

    let sizes = SplitSizes::default();
    let curves = (0..SHUFFLED_REPEATS)
        .map(|r| {
            let s = sizes.draw(pool, derive_seed(MASTER, "split", r as u64)).unwrap();
            let mut labels = s.train.labels().to_vec();
            labels.shuffle(&mut seeded(derive_seed(MASTER, "shuffle", r as u64)));
            let shuffled = TraceSet::new(
                s.train.samples().clone(),
                s.train.plaintexts().map(<[u8]>::to_vec),
                labels,
                s.train.scheme(),
                s.train.fixed_key(),
            )
            .unwrap();
            let mut cfg = classifier(r);
            cfg.mlp.epoch_checkpoints = vec![50];
            let model = train_model(&shuffled, &cfg, None).unwrap();
            attack_rank_curve(&model, &s.test, BUDGET, derive_seed(MASTER, "attack-order", r as u64)).unwrap()
        })
        .collect();
    let shuffled_ge = GeReport::from_curves(curves, vec![0; SHUFFLED_REPEATS]).unwrap();
    let m = &shuffled_ge.mean_rank_curve;
    let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: oracle_ge.convergence_point == Some(1) && lo >= 100.0 && hi <= 155.0,
        detail: format!(
            "oracle convergence {:?}; shuffled-label mean rank over 1..{BUDGET} in [{lo:.1}, {hi:.1}] \
             (GE@1 {:.1}, GE@10 {:.1}, GE@100 {:.1}, avg {:.1}, {SHUFFLED_REPEATS} repeats)",
            oracle_ge.convergence_point,
            m[0],
            m[9],
            m[99],
            mean(m.iter().cloned())
        ),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();

    let lsb = sim(LabelScheme::Lsb, None);
    let lsb_splits = splits(&lsb);

    // CGANs on the full 500-trace training sets, shared by criteria 1 to 4
    let t = Instant::now();
    let gan500: Vec<CganPair<f64>> = lsb_splits.iter().enumerate().map(|(r, s)| train_gan(&s.train, "cgan-500", r)).collect();
    let gan500_secs = t.elapsed().as_secs_f64();

    // criterion 1
    let t = Instant::now();
    let mut hits = 0;
    let mut rows = Vec::new();
    for (r, s) in lsb_splits.iter().enumerate() {
        let (oi, ov) = cpa(&s.train).peak();
        let (gi, gv) = cpa(&generated(&gan500[r], 400, "500", r)).peak();
        let ok = gi == 25 && gi == oi && (gv.abs() - ov.abs()).abs() <= 0.25;
        hits += ok as usize;
        rows.push(format!("{gi}:{:.2}/{oi}:{:.2}", gv.abs(), ov.abs()));
    }
    let c1_secs = gan500_secs + t.elapsed().as_secs_f64();
    println!("    generated vs original CPA peaks: {}", rows.join(" "));
    let c1 = Outcome {
        pass: hits >= 8 && c1_secs < 600.0,
        detail: format!("{hits}/{REPEATS} runs match (need 8), {c1_secs:.0}s (limit 600s)"),
    };
    report(1, "CPA peak of generated traces", &c1);
    results.push((1, c1));

    // criterion 2
    let (orig, t_orig) = ge(&lsb_splits, |_, s| s.train.clone());
    let (rep, t_rep) = ge(&lsb_splits, |r, s| {
        augment_repeat(&s.train, 400, derive_seed(MASTER, "repeat", r as u64)).unwrap()
    });
    let (g500, t_g500) = ge(&lsb_splits, |r, s| augment(&s.train, &generated(&gan500[r], 400, "500", r)).unwrap());
    describe("original", &orig);
    describe("+400 repeated", &rep);
    describe("+400 cgan", &g500);
    let c2_secs = gan500_secs + t_orig + t_rep + t_g500;
    let gain = conv(&orig) as i64 - conv(&g500) as i64;
    let rep_shift = conv(&rep) as i64 - conv(&orig) as i64;
    let c2 = Outcome {
        pass: gain >= 150 && rep_shift.abs() <= 50 && c2_secs < 1800.0,
        detail: format!(
            "convergence original {} / repeated {} / cgan {}: gain {gain} (need >= 150), repeated shift {rep_shift} \
             (need within 50), {c2_secs:.0}s (limit 1800s)",
            conv(&orig),
            conv(&rep),
            conv(&g500)
        ),
    };
    report(2, "CGAN augmentation beats original and repetition", &c2);
    results.push((2, c2));

    // criterion 3
    let gan200: Vec<CganPair<f64>> = lsb_splits
        .iter()
        .enumerate()
        .map(|(r, s)| train_gan(&s.train.slice(0..200), "cgan-200", r))
        .collect();
    let gan50: Vec<CganPair<f64>> = lsb_splits
        .iter()
        .enumerate()
        .map(|(r, s)| train_gan(&s.train.slice(0..50), "cgan-50", r))
        .collect();
    let noise = |pairs: &[CganPair<f64>], tag: &str| {
        mean((0..REPEATS).map(|r| cpa(&generated(&pairs[r], 400, tag, r)).leakage_noise(2)))
    };
    let (n500, n200, n50) = (noise(&gan500, "500"), noise(&gan200, "200"), noise(&gan50, "50"));
    println!("    leakage noise of generated traces from 500/200/50: {n500:.4} {n200:.4} {n50:.4}");
    let (g200, _) = ge(&lsb_splits, |r, s| augment(&s.train, &generated(&gan200[r], 400, "200", r)).unwrap());
    let (g50, _) = ge(&lsb_splits, |r, s| augment(&s.train, &generated(&gan50[r], 400, "50", r)).unwrap());
    describe("from 200", &g200);
    describe("from 50", &g50);
    let (c500, c200, c50) = (conv(&g500), conv(&g200), conv(&g50));
    let gain50 = conv(&rep) as i64 - c50 as i64;
    let c3 = Outcome {
        pass: c500 <= c200 && c200 <= c50 && gain50 < 50,
        detail: format!(
            "convergence from 500/200/50 = {c500}/{c200}/{c50} (need non-decreasing), \
             from-50 gain over repeated {gain50} (need < 50)"
        ),
    };
    report(3, "generation quality tracks source size", &c3);
    results.push((3, c3));

    // criterion 4
    let (g250, _) = ge(&lsb_splits, |r, s| augment(&s.train, &generated(&gan500[r], 250, "500", r)).unwrap());
    let (g500b, _) = ge(&lsb_splits, |r, s| augment(&s.train, &generated(&gan500[r], 500, "500", r)).unwrap());
    let (g1000, _) = ge(&lsb_splits, |r, s| augment(&s.train, &generated(&gan500[r], 1000, "500", r)).unwrap());
    describe("+250 cgan", &g250);
    describe("+500 cgan", &g500b);
    describe("+1000 cgan", &g1000);
    let cs = [conv(&g250), conv(&g500b), conv(&g1000)];
    let spread = cs.iter().max().unwrap() - cs.iter().min().unwrap();
    let weakest_gain = conv(&orig) as i64 - *cs.iter().max().unwrap() as i64;
    let c4 = Outcome {
        pass: (spread as i64) < weakest_gain,
        detail: format!(
            "convergence +250/+500/+1000 = {}/{}/{}: spread {spread} vs smallest gain over original {weakest_gain}",
            cs[0], cs[1], cs[2]
        ),
    };
    report(4, "generated set size barely matters", &c4);
    results.push((4, c4));
    drop((gan200, gan50));

    // criterion 5
    let hw = lsb.relabel(LabelScheme::HammingWeight).unwrap();
    let hw_splits = splits(&hw);
    let redraws: usize = hw_splits.iter().map(|s| s.redraws).sum();
    let (hw_orig, _) = ge(&hw_splits, |_, s| s.train.clone());
    let (hw_gan, _) = ge(&hw_splits, |r, s| {
        let pair = train_gan(&s.train, "cgan-hw", r);
        augment(&s.train, &generated(&pair, 395, "hw", r)).unwrap()
    });
    describe("hw original", &hw_orig);
    describe("hw +395 cgan", &hw_gan);
    let hw_gain = conv(&hw_orig) as i64 - conv(&hw_gan) as i64;
    let c5 = Outcome {
        pass: hw_gain <= 50,
        detail: format!(
            "convergence original {} / cgan {}: gain {hw_gain} (need <= 50), {redraws} split redraws",
            conv(&hw_orig),
            conv(&hw_gan)
        ),
    };
    report(5, "HW-label generation gives no gain", &c5);
    results.push((5, c5));

    // criterion 6
    let jit = sim(LabelScheme::Lsb, Some(2));
    let jit_splits = splits(&jit);
    let peak = |ss: &[Split<f64>]| {
        let c: Vec<_> = ss.iter().map(|s| cpa(&s.train)).collect();
        (
            mean(c.iter().map(|c| c.peak().1.abs())),
            mean(c.iter().map(|c| c.peak_width(0.5) as f64)),
        )
    };
    let (sync_peak, sync_width) = peak(&lsb_splits);
    let (jit_peak, jit_width) = peak(&jit_splits);
    let (j_orig, _) = ge(&jit_splits, |_, s| s.train.clone());
    let (j_gan, _) = ge(&jit_splits, |r, s| {
        let pair = train_gan(&s.train, "cgan-jitter", r);
        augment(&s.train, &generated(&pair, 400, "jitter", r)).unwrap()
    });
    describe("jitter orig", &j_orig);
    describe("jitter +cgan", &j_gan);
    let j_gain = conv(&j_orig) as i64 - conv(&j_gan) as i64;
    let c6 = Outcome {
        pass: jit_peak < sync_peak && jit_width > sync_width && j_gain >= 100,
        detail: format!(
            "peak |rho| {jit_peak:.3} vs {sync_peak:.3} synchronized, width {jit_width:.1} vs {sync_width:.1}; \
             convergence original {} / cgan {}: gain {j_gain} (need >= 100)",
            conv(&j_orig),
            conv(&j_gan)
        ),
    };
    report(6, "desynchronized traces", &c6);
    results.push((6, c6));

    let c7 = property_suite();
    report(7, "property suite", &c7);
    results.push((7, c7));

    let c8 = perfect_model_sanity(&lsb);
    report(8, "perfect and label-shuffled models", &c8);
    results.push((8, c8));

    let failed: Vec<String> = results.iter().filter(|r| !r.1.pass).map(|r| r.0.to_string()).collect();
    println!(
        "acceptance: {}/{} criteria pass in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
