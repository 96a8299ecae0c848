use ndarray::{Array2, ArrayView1};
use proptest::prelude::*;

use tracegan::cgan::allocate_class_counts;
use tracegan::io::{decode_traces, encode_traces};
use tracegan::leakage::{cpa, dpa, pearson, ValueMap};
use tracegan::profiling::{
    board_from_log_likelihoods, key_log_likelihoods, key_rank, GaussianTemplate, KeyScoreBoard,
};
use tracegan::trace::{intermediate_value, LabelScheme, TraceSet};

fn scheme_strategy() -> impl Strategy<Value = LabelScheme> {
    prop_oneof![
        Just(LabelScheme::Lsb),
        Just(LabelScheme::HammingWeight),
        Just(LabelScheme::GanLabel),
        Just(LabelScheme::RawValue),
    ]
}

fn trace_set_strategy() -> impl Strategy<Value = TraceSet<f32>> {
    (1usize..20, 1usize..12, scheme_strategy(), any::<bool>(), proptest::option::of(any::<u8>())).prop_flat_map(
        |(n, ns, scheme, with_pt, key)| {
            let k = scheme.n_classes();
            (
                proptest::collection::vec(any::<f32>(), n * ns),
                proptest::collection::vec((0..k).prop_map(|l| l as u8), n),
                proptest::collection::vec(any::<u8>(), n),
            )
                .prop_map(move |(s, labels, pts)| {
                    TraceSet::new(
                        Array2::from_shape_vec((n, ns), s).unwrap(),
                        with_pt.then_some(pts),
                        labels,
                        scheme,
                        key,
                    )
                    .unwrap()
                })
        },
    )
}

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let d = det3(m);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // cofactor of m[j][i]
            let rows: Vec<usize> = (0..3).filter(|&r| r != j).collect();
            let cols: Vec<usize> = (0..3).filter(|&c| c != i).collect();
            let minor = m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]];
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            out[i][j] = sign * minor / d;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_file_round_trip_is_bit_exact(ts in trace_set_strategy()) {
        let back = decode_traces::<f32>(&encode_traces(&ts).unwrap()).unwrap();
        prop_assert_eq!(back.labels(), ts.labels());
        prop_assert_eq!(back.plaintexts(), ts.plaintexts());
        prop_assert_eq!(back.fixed_key(), ts.fixed_key());
        prop_assert_eq!(back.scheme(), ts.scheme());
        let bits = |t: &TraceSet<f32>| t.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&ts));
    }

    #[test]
    fn pearson_matches_two_pass_oracle(
        xy in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..200)
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let expected = naive_pearson(&x, &y);
        prop_assume!(expected.is_finite());
        let got = pearson(&x, &y).unwrap();
        prop_assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn cpa_is_affine_invariant(seed in any::<u64>(), a in 0.01f64..100.0, b in -1e3f64..1e3, key in any::<u8>()) {
        let mut cfg = tracegan::simulate::SimConfig::standard(200, key, seed);
        cfg.n_samples = 8;
        cfg.leakage_index = 3;
        let ts: TraceSet<f64> = tracegan::simulate::simulate(&cfg).unwrap();
        let base = cpa(&ts, key, ValueMap::Hw).unwrap();
        let up = cpa(&ts.map_samples(|v| a * v + b), key, ValueMap::Hw).unwrap();
        let down = cpa(&ts.map_samples(|v| -a * v + b), key, ValueMap::Hw).unwrap();
        for j in 0..8 {
            prop_assert!((base.values[j] - up.values[j]).abs() < 1e-9);
            prop_assert!((base.values[j] + down.values[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn dpa_matches_brute_force_and_scales(seed in any::<u64>(), key in any::<u8>(), bit in 0u8..8, c in -10f64..10.0) {
        let mut cfg = tracegan::simulate::SimConfig::standard(150, key, seed);
        cfg.n_samples = 6;
        cfg.leakage_index = 2;
        let ts: TraceSet<f64> = tracegan::simulate::simulate(&cfg).unwrap();
        let pts = ts.plaintexts().unwrap();
        let sel: Vec<bool> = pts.iter().map(|&p| (intermediate_value(p, key) >> bit) & 1 == 1).collect();
        prop_assume!(sel.iter().any(|&s| s) && sel.iter().any(|&s| !s));
        let d = dpa(&ts, key, bit).unwrap();
        for j in 0..6 {
            let col = ts.samples().column(j);
            let mean = |want: bool| {
                let v: Vec<f64> = col.iter().zip(&sel).filter(|(_, &s)| s == want).map(|(&x, _)| x).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            prop_assert!((d.values[j] - (mean(true) - mean(false))).abs() < 1e-12);
        }
        let scaled = dpa(&ts.map_samples(|v| c * v), key, bit).unwrap();
        for j in 0..6 {
            prop_assert!((scaled.values[j] - c * d.values[j]).abs() < 1e-9 * (1.0 + d.values[j].abs()));
        }
    }

    #[test]
    fn key_rank_invariant_under_increasing_transforms(
        scores in proptest::collection::vec(-50f64..50.0, 256),
        key in any::<u8>(),
        a in 0.001f64..1e3,
        b in -1e3f64..1e3,
    ) {
        let base = key_rank(&KeyScoreBoard::new(scores.clone()).unwrap(), key);
        let affine = KeyScoreBoard::new(scores.iter().map(|s| a * s + b).collect()).unwrap();
        let exp = KeyScoreBoard::new(scores.iter().map(|s| s.exp()).collect()).unwrap();
        prop_assert_eq!(key_rank(&affine, key), base);
        prop_assert_eq!(key_rank(&exp, key), base);
    }

    #[test]
    fn log_scoring_orders_like_products(
        n in 1usize..=5,
        hw in any::<bool>(),
        raw in proptest::collection::vec(0.05f64..1.0, 45),
        pts in proptest::collection::vec(any::<u8>(), 5),
    ) {
        let scheme = if hw { LabelScheme::HammingWeight } else { LabelScheme::Lsb };
        let k = scheme.n_classes();
        let mut probs = Array2::<f64>::zeros((n, k));
        for i in 0..n {
            let row = &raw[i * 9..i * 9 + k];
            let z: f64 = row.iter().sum();
            for c in 0..k {
                probs[[i, c]] = row[c] / z;
            }
        }
        let pts = &pts[..n];
        let ll = key_log_likelihoods(probs.view(), pts, scheme).unwrap();
        let log_board = board_from_log_likelihoods(ll.view());
        let product: Vec<f64> = (0..=255u8)
            .map(|key| {
                pts.iter().enumerate().map(|(i, &p)| {
                    let label = scheme.label_of(intermediate_value(p, key)).unwrap() as usize;
                    probs[[i, label]]
                }).product()
            })
            .collect();
        let prod_board = KeyScoreBoard::new(product).unwrap();
        prop_assert_eq!(log_board.ranking(), prod_board.ranking());
    }

    #[test]
    fn template_posterior_matches_brute_force(
        means in proptest::collection::vec(-3f64..3.0, 6),
        noise in proptest::collection::vec(-1f64..1.0, 60),
        probe in proptest::collection::vec(-3f64..3.0, 3),
    ) {
        // 20 traces per class around two 3-d means
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20usize {
            let c = i % 2;
            for d in 0..3 {
                samples.push(means[c * 3 + d] + noise[i * 3 + d] * (1.0 + d as f64 * 0.5));
            }
            labels.push(c as u8);
        }
        let ts = TraceSet::new(Array2::from_shape_vec((20, 3), samples).unwrap(), None, labels, LabelScheme::Lsb, None).unwrap();
        let t = GaussianTemplate::fit(&ts, 0..3).unwrap();
        let mut cov = [[0.0; 3]; 3];
        for i in 0..3 { for j in 0..3 { cov[i][j] = t.covariance[[i, j]]; } }
        let inv = inv3(&cov);
        let density = |mu: ArrayView1<f64>| {
            let d: Vec<f64> = (0..3).map(|i| probe[i] - mu[i]).collect();
            let mut q = 0.0;
            for i in 0..3 { for j in 0..3 { q += d[i] * inv[i][j] * d[j]; } }
            (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(3) * det3(&cov)).sqrt()
        };
        let dens: Vec<f64> = (0..2).map(|c| density(t.means.row(c))).collect();
        let z: f64 = dens.iter().sum();
        prop_assume!(z > 1e-250);
        let x = Array2::from_shape_vec((1, 3), probe.clone()).unwrap();
        let p = t.probabilities(x.view()).unwrap();
        for c in 0..2 {
            prop_assert!((p[[0, c]] - dens[c] / z).abs() < 1e-9, "{} vs {}", p[[0, c]], dens[c] / z);
        }
    }
}

#[test]
fn allocation_exhaustive_up_to_ten_thousand() {
    const W: [f64; 9] = [1.0, 8.0, 28.0, 56.0, 70.0, 56.0, 28.0, 8.0, 1.0];
    for scheme in [LabelScheme::Lsb, LabelScheme::HammingWeight, LabelScheme::GanLabel, LabelScheme::RawValue] {
        let k = scheme.n_classes();
        for total in 1..=10_000usize {
            let c = allocate_class_counts(scheme, total);
            assert_eq!(c.len(), k);
            assert_eq!(c.iter().sum::<usize>(), total, "{scheme} {total}");
            for (i, &ci) in c.iter().enumerate() {
                let expected = if scheme == LabelScheme::HammingWeight {
                    total as f64 * W[i] / 256.0
                } else {
                    total as f64 / k as f64
                };
                assert!((ci as f64 - expected).abs() < 1.0, "{scheme} {total} class {i}: {ci} vs {expected}");
            }
            if scheme != LabelScheme::HammingWeight {
                assert!(c.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
