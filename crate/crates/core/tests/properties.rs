//! Property tests for the invariants each module promises.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use stormstack::autodiff::{Graph, Tensor};
use stormstack::features::{balance, class_counts, extract_shsr_stats, split, split_sizes, EventClass, Labeled, ShsrVolume};
use stormstack::io::format_real;
use stormstack::kalman::{smooth_series, KalmanModel, KalmanState};
use stormstack::metrics::{confusion, metrics};
use stormstack::model::predict_class;
use stormstack::rng::SplitMix64;

fn class() -> impl Strategy<Value = EventClass> {
    (0usize..3).prop_map(|i| EventClass::from_index(i).unwrap())
}

// ---------------------------------------------------------------- autodiff

proptest! {
    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..4, cols in 1usize..8, seed in any::<u64>()) {
        let mut r = SplitMix64::new(seed);
        let values: Vec<f64> = (0..rows * cols).map(|_| r.uniform(-50.0, 50.0)).collect();
        let mut g = Graph::new();
        let x = g.constant(&Tensor::new(&[rows, cols], values).unwrap());
        let s = g.softmax(x).unwrap();
        for row in g.value(s).chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn matmul_is_associative(seed in any::<u64>()) {
        let mut r = SplitMix64::new(seed);
        let mut m = || Tensor::new(&[4, 4], (0..16).map(|_| r.uniform(-2.0, 2.0)).collect()).unwrap();
        let (a, b, c) = (m(), m(), m());
        let mut g = Graph::new();
        let (a, b, c) = (g.constant(&a), g.constant(&b), g.constant(&c));
        let ab = g.matmul(a, b).unwrap();
        let left = g.matmul(ab, c).unwrap();
        let bc = g.matmul(b, c).unwrap();
        let right = g.matmul(a, bc).unwrap();
        for (x, y) in g.value(left).iter().zip(g.value(right)) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0));
        }
    }
}

// ------------------------------------------------------------------ kalman

/// Scalar random-walk recursion written out longhand.
fn scalar_oracle(z: &[f64], q: f64, r: f64) -> Vec<f64> {
    let mut x = z[0];
    let mut p = r;
    let mut out = vec![x];
    for &obs in &z[1..] {
        let p_prior = p + q;
        let k = p_prior / (p_prior + r);
        x += k * (obs - x);
        p = (1.0 - k) * p_prior;
        out.push(x);
    }
    out
}

fn random_matrix(r: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.uniform(-scale, scale))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn smooth_series_matches_scalar_oracle(
        t in 1usize..=50,
        d in 1usize..4,
        q in 0.0f64..1.0,
        r in 0.01f64..10.0,
        seed in any::<u64>(),
    ) {
        let mut rng = SplitMix64::new(seed);
        let series: Vec<f64> = (0..t * d).map(|_| rng.uniform(-20.0, 60.0)).collect();
        let out = smooth_series(&series, d, q, r).unwrap();
        for c in 0..d {
            let column: Vec<f64> = (0..t).map(|i| series[i * d + c]).collect();
            for (i, e) in scalar_oracle(&column, q, r).iter().enumerate() {
                prop_assert!((out[i * d + c] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_process_noise_never_amplifies_spread(t in 2usize..40, r in 0.01f64..10.0, seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let series: Vec<f64> = (0..t).map(|_| rng.gaussian(10.0, 5.0)).collect();
        let out = smooth_series(&series, 1, 0.0, r).unwrap();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
        };
        prop_assert!(var(&out) <= var(&series) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// 20 systems × 50 cycles = 1000 predict/update cycles.
    #[test]
    fn covariance_stays_symmetric_psd_diagonal(n in 1usize..5, p in 1usize..4, seed in any::<u64>()) {
        let mut r = SplitMix64::new(seed);
        let f = random_matrix(&mut r, n, n, 0.9 / n as f64);
        let b = random_matrix(&mut r, n, 1, 1.0);
        let h = random_matrix(&mut r, p, n, 1.0);
        let a = random_matrix(&mut r, n, n, 0.5);
        let c = random_matrix(&mut r, p, p, 0.5);
        let q = &a * a.transpose();
        let rm = &c * c.transpose() + DMatrix::identity(p, p) * 0.1;
        let model = KalmanModel::new(f, b, h, q, rm).unwrap();
        let mut s = KalmanState {
            x: DVector::from_fn(n, |_, _| r.uniform(-1.0, 1.0)),
            p: DMatrix::identity(n, n),
            step: 0,
        };
        for _ in 0..50 {
            let u = DVector::from_element(1, r.uniform(-1.0, 1.0));
            let z = DVector::from_fn(p, |_, _| r.uniform(-5.0, 5.0));
            s = model.predict(&s, &u).unwrap();
            s = model.update(&s, &z).unwrap();
            for i in 0..n {
                prop_assert!(s.p[(i, i)] >= 0.0);
                for j in 0..n {
                    prop_assert!((s.p[(i, j)] - s.p[(j, i)]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn identity_updates_converge_monotonically(n in 1usize..5, seed in any::<u64>()) {
        let mut r = SplitMix64::new(seed);
        let id = DMatrix::identity(n, n);
        let model = KalmanModel::new(
            id.clone(),
            DMatrix::zeros(n, 1),
            id.clone(),
            DMatrix::zeros(n, n),
            id.clone() * r.uniform(0.1, 5.0),
        )
        .unwrap();
        let z = DVector::from_fn(n, |_, _| r.uniform(-10.0, 10.0));
        let mut s = KalmanState { x: DVector::zeros(n), p: id * 2.0, step: 0 };
        let mut gap: Vec<f64> = (0..n).map(|i| (s.x[i] - z[i]).abs()).collect();
        for _ in 0..30 {
            s = model.predict(&s, &DVector::zeros(1)).unwrap();
            s = model.update(&s, &z).unwrap();
            for i in 0..n {
                let g = (s.x[i] - z[i]).abs();
                prop_assert!(g <= gap[i]);
                gap[i] = g;
            }
        }
    }
}

// ---------------------------------------------------------------- features

struct OracleStats {
    min: f64,
    max: f64,
    mean: f64,
    variance: f64,
    nonzero: f64,
    above: f64,
}

/// One pass with Welford's running moments.
fn stats_oracle(values: &[f64], missing: f64, threshold: f64) -> OracleStats {
    let mut o = OracleStats {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        mean: 0.0,
        variance: 0.0,
        nonzero: 0.0,
        above: 0.0,
    };
    let mut n = 0.0;
    let mut m2 = 0.0;
    for &v in values {
        if v == missing {
            continue;
        }
        n += 1.0;
        o.min = o.min.min(v);
        o.max = o.max.max(v);
        let delta = v - o.mean;
        o.mean += delta / n;
        m2 += delta * (v - o.mean);
        if v.abs() > 0.0 {
            o.nonzero += 1.0;
        }
        if v > threshold {
            o.above += 1.0;
        }
    }
    o.variance = m2 / n;
    o
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stats_match_single_pass_oracle(
        nx in 1usize..9, ny in 1usize..9, nz in 1usize..5,
        missing_rate in 0.0f64..0.5,
        threshold in 0.0f64..70.0,
        seed in any::<u64>(),
    ) {
        let mut r = SplitMix64::new(seed);
        let n = nx * ny * nz;
        let mut values: Vec<f64> = (0..n)
            .map(|_| if r.next_f64() < missing_rate { -999.0 } else if r.next_f64() < 0.2 { 0.0 } else { r.uniform(-10.0, 75.0) })
            .collect();
        values[r.below(n)] = r.uniform(0.0, 75.0);
        let v = ShsrVolume::new([nx, ny, nz], values.clone(), 0).unwrap();
        let s = extract_shsr_stats(&v, threshold).unwrap();
        let o = stats_oracle(&values, -999.0, threshold);
        prop_assert_eq!(s.min, o.min);
        prop_assert_eq!(s.max, o.max);
        prop_assert!(close(s.mean, o.mean), "mean {} vs {}", s.mean, o.mean);
        prop_assert!(close(s.variance, o.variance), "variance {} vs {}", s.variance, o.variance);
        prop_assert_eq!(s.nonzero_count, o.nonzero);
        prop_assert_eq!(s.above_threshold_count, o.above);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
        prop_assert!(s.variance >= 0.0);
        if threshold > 0.0 {
            prop_assert!(s.above_threshold_count <= s.nonzero_count);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Item {
    id: String,
    label: EventClass,
}

impl Labeled for Item {
    fn class(&self) -> EventClass {
        self.label
    }
}

fn items(labels: &[EventClass], prefix: &str) -> Vec<Item> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| Item { id: format!("{prefix}{i}"), label })
        .collect()
}

proptest! {
    #[test]
    fn balance_then_split_partitions(
        mut labels in prop::collection::vec(class(), 3..120),
        seed in any::<u64>(),
        tr in 0.0f64..1.0,
    ) {
        labels.extend(EventClass::ALL);
        let input = items(&labels, "s");
        let balanced = balance(&input, seed).unwrap();
        let counts = class_counts(&input);
        let n = *counts.iter().min().unwrap();
        prop_assert_eq!(class_counts(&balanced), [n; 3]);
        for c in EventClass::ALL {
            if counts[c.index()] == n {
                prop_assert_eq!(
                    balanced.iter().filter(|s| s.label == c).count(),
                    input.iter().filter(|s| s.label == c).count()
                );
            }
        }
        // Selection preserves relative input order.
        let positions: Vec<usize> = balanced.iter().map(|b| input.iter().position(|i| i == b).unwrap()).collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(&balanced, &balance(&input, seed).unwrap());

        let va = (1.0 - tr) / 2.0;
        let fractions = [tr, va, 1.0 - tr - va];
        let parts = split(&balanced, fractions, seed).unwrap();
        let mut ids: Vec<&str> = parts.train.iter().chain(&parts.validation).chain(&parts.test).map(|s| s.id.as_str()).collect();
        prop_assert_eq!(ids.len(), balanced.len());
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), balanced.len());
        let sizes = split_sizes(n, fractions);
        prop_assert_eq!(class_counts(&parts.train), [sizes[0]; 3]);
        prop_assert_eq!(class_counts(&parts.validation), [sizes[1]; 3]);
        prop_assert_eq!(class_counts(&parts.test), [sizes[2]; 3]);

        // Renaming samples does not move them between parts.
        let renamed: Vec<Item> = balanced.iter().map(|s| Item { id: format!("x{}", s.id), ..s.clone() }).collect();
        let other = split(&renamed, fractions, seed).unwrap();
        let strip = |v: &[Item]| v.iter().map(|s| s.id.trim_start_matches('x').to_string()).collect::<Vec<_>>();
        prop_assert_eq!(strip(&other.train), strip(&parts.train));
        prop_assert_eq!(strip(&other.test), strip(&parts.test));
    }
}

// ----------------------------------------------------------------- metrics

fn tally(preds: &[EventClass], truth: &[EventClass], p: EventClass) -> (f64, f64, f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&a, &t) in preds.iter().zip(truth) {
        match (t == p, a == p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (precision, recall, f1, ratio(tp + tn, tp + tn + fp + fn_))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_equal_brute_force_tally(
        pairs in prop::collection::vec((class(), class()), 1..200),
        positive in class(),
    ) {
        let (preds, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let cm = confusion(&preds, &truth).unwrap();
        prop_assert_eq!(cm.total(), preds.len() as u64);
        let m = metrics(&cm, positive);
        let (p, r, f1, acc) = tally(&preds, &truth, positive);
        prop_assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (p, r, f1, acc));
        if m.precision > 0.0 && m.recall > 0.0 {
            prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-15 && m.f1 <= m.precision.max(m.recall) + 1e-15);
        }
        prop_assert_eq!(m.f1 == 0.0, m.precision * m.recall == 0.0);
        for v in [m.precision, m.recall, m.f1, m.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn symmetric_confusion_has_class_independent_accuracy() {
    let mut cm = confusion(&[], &[]).unwrap();
    cm.counts = [[5, 1, 1], [1, 5, 1], [1, 1, 5]];
    let acc: Vec<f64> = EventClass::ALL.iter().map(|&c| metrics(&cm, c).accuracy).collect();
    assert_eq!(acc, vec![acc[0]; 3]);
}

// ------------------------------------------------------------ misc invariants

proptest! {
    #[test]
    fn argmax_survives_increasing_transforms(p in prop::array::uniform3(0.0f64..1.0)) {
        let c = predict_class(&p);
        let cube = p.map(|v| v * v * v);
        let affine = p.map(|v| 3.0 * v + 7.0);
        let exp = p.map(f64::exp);
        prop_assert_eq!(predict_class(&cube), c);
        prop_assert_eq!(predict_class(&affine), c);
        prop_assert_eq!(predict_class(&exp), c);
    }

    #[test]
    fn real_formatting_round_trips(exp in -30.0f64..30.0, mantissa in 1.0f64..10.0, negative in any::<bool>()) {
        let x = mantissa * 10f64.powf(exp) * if negative { -1.0 } else { 1.0 };
        let s = format_real(x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        let mantissa_text: String = s.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
        let significant = mantissa_text.trim_start_matches('0').trim_end_matches('0').len();
        prop_assert!(significant <= 17, "{}", s);
    }

    #[test]
    fn sample_indices_are_distinct_and_in_range(n in 1usize..200, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let take = ((n as f64) * frac) as usize;
        let mut idx = SplitMix64::new(seed).sample_indices(n, take);
        prop_assert_eq!(idx.len(), take);
        prop_assert!(idx.iter().all(|&i| i < n));
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), take);
    }
}
