use narx::data::{fit_normalization, split_indices, Channel, DelayedDataset, LagSet, SplitRatios, TimeSeriesFrame};
use narx::diagnostics::{
    acceptance_verdict, error_autocorrelation, input_error_crosscorrelation, max_divergence, regression_r, Metrics,
    Thresholds,
};
use narx::network::{NarxConfig, NarxNetwork, Transfer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lag_set(max_lo: usize, max_span: usize, min: usize) -> impl Strategy<Value = LagSet> {
    (min..=max_lo, 0..=max_span).prop_map(|(lo, span)| LagSet::range(lo, lo + span).unwrap())
}

fn architecture() -> impl Strategy<Value = NarxConfig> {
    (lag_set(3, 3, 0), lag_set(3, 2, 1), 1usize..=6, 1usize..=4)
        .prop_map(|(du, dy, n, m)| NarxConfig::new(du, dy, n, m).unwrap())
}

fn series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Direct evaluation of the NARX equation from raw series, indexing the flat
/// weight vector by its documented order.
fn oracle_output(cfg: &NarxConfig, w: &[f64], exo: &[Vec<f64>], y: &[f64], t: usize) -> f64 {
    let m = exo.len();
    let du = cfg.input_delays.lags();
    let dy = cfg.feedback_delays.lags();
    let n = cfg.hidden;
    let iw = |h: usize, i: usize, c: usize| w[h * du.len() * m + i * m + c];
    let lw_base = n * du.len() * m;
    let lw = |h: usize, j: usize| w[lw_base + h * dy.len() + j];
    let b1_base = lw_base + n * dy.len();
    let lw2_base = b1_base + n;
    let b2 = w[lw2_base + n];
    let mut out = b2;
    for h in 0..n {
        let mut s = w[b1_base + h];
        for (i, &d) in du.iter().enumerate() {
            for (c, u) in exo.iter().enumerate() {
                s += iw(h, i, c) * u[t - d];
            }
        }
        for (j, &d) in dy.iter().enumerate() {
            s += lw(h, j) * y[t - d];
        }
        out += w[lw2_base + h] * s.tanh();
    }
    out
}

fn random_dataset(cfg: &NarxConfig, len: usize, seed: u64) -> (DelayedDataset, Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exo: Vec<Vec<f64>> = (0..cfg.n_exo).map(|_| series(&mut rng, len)).collect();
    let y = series(&mut rng, len);
    let cols: Vec<&[f64]> = exo.iter().map(Vec::as_slice).collect();
    let ds = DelayedDataset::from_series(&cols, &y, &cfg.input_delays, &cfg.feedback_delays, None).unwrap();
    (ds, exo, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn open_loop_matches_scalar_equation(cfg in architecture(), seed in any::<u64>()) {
        let net = NarxNetwork::init(cfg.clone(), seed).unwrap();
        let len = cfg.max_delay() + 6;
        let (ds, exo, y) = random_dataset(&cfg, len, seed ^ 1);
        let out = net.forward_open(&ds).unwrap();
        for (k, o) in out.iter().enumerate() {
            let t = ds.first_usable_index + k;
            let expected = oracle_output(&cfg, net.weights(), &exo, &y, t);
            prop_assert!((o - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn jacobian_matches_central_differences(cfg in architecture(), seed in any::<u64>()) {
        let net = NarxNetwork::init(cfg.clone(), seed).unwrap();
        let (ds, _, _) = random_dataset(&cfg, cfg.max_delay() + 5, seed ^ 2);
        let (jac, _) = net.jacobian(&ds).unwrap();
        let h = 1e-6;
        for p in 0..cfg.param_count() {
            let mut plus = net.weights().to_vec();
            let mut minus = plus.clone();
            plus[p] += h;
            minus[p] -= h;
            let fp = net.with_weights(plus).unwrap().forward_open(&ds).unwrap();
            let fm = net.with_weights(minus).unwrap().forward_open(&ds).unwrap();
            for k in 0..ds.len() {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                prop_assert!((jac[(k, p)] - fd).abs() / (1.0 + fd.abs()) < 1e-6);
            }
        }
    }

    #[test]
    fn delayed_rows_follow_their_indices(cfg in architecture(), len_extra in 1usize..20) {
        let len = cfg.max_delay() + len_extra;
        let (ds, exo, y) = random_dataset(&cfg, len, 3);
        prop_assert_eq!(ds.len(), len - cfg.max_delay());
        for k in 0..ds.len() {
            let t = k + cfg.max_delay();
            prop_assert_eq!(ds.target[k], y[t]);
            for (i, &d) in cfg.input_delays.lags().iter().enumerate() {
                for (c, u) in exo.iter().enumerate() {
                    prop_assert_eq!(ds.exo[(k, i * cfg.n_exo + c)], u[t - d]);
                }
            }
            for (j, &d) in cfg.feedback_delays.lags().iter().enumerate() {
                prop_assert_eq!(ds.feedback[(k, j)], y[t - d]);
            }
        }
    }

    #[test]
    fn parameter_count_matches_closed_form(cfg in architecture()) {
        let n = cfg.hidden;
        let expected = n * (cfg.input_delays.len() * cfg.n_exo + cfg.feedback_delays.len() + 1) + n + 1;
        prop_assert_eq!(cfg.param_count(), expected);
        prop_assert_eq!(NarxNetwork::zeros(cfg).unwrap().weights().len(), expected);
    }
}

proptest! {
    #[test]
    fn normalization_round_trips(
        values in prop::collection::vec(-1e6f64..1e6, 2..60),
        scale in 1e-3f64..1e3,
    ) {
        let n = values.len();
        let close: Vec<f64> = values.iter().map(|v| v * scale).collect();
        prop_assume!(close.iter().any(|&c| c != close[0]));
        let lo: Vec<f64> = close.iter().map(|c| c - 1.0).collect();
        let hi: Vec<f64> = close.iter().map(|c| c + 1.0).collect();
        let frame = TimeSeriesFrame::new(
            (0..n as i64).collect(), close.clone(), hi, lo, vec![1.0; n], close.clone(), None,
        ).unwrap();
        let spec = fit_normalization(&frame, &[Channel::Close]).unwrap();
        let z = spec.normalize(&close, Channel::Close).unwrap();
        prop_assert!(z.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        let back = spec.invert(&z, Channel::Close).unwrap();
        let span = spec.range(Channel::Close).unwrap().max - spec.range(Channel::Close).unwrap().min;
        for (a, b) in close.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(span));
        }
    }

    #[test]
    fn splits_partition_samples(n in 3usize..5000, a in 1u32..100, b in 1u32..100, c in 1u32..100) {
        let total = (a + b + c) as f64;
        let ratios = SplitRatios { train: a as f64 / total, validation: b as f64 / total, test: c as f64 / total };
        let s = split_indices(n, ratios).unwrap();
        prop_assert_eq!(s.train.start, 0);
        prop_assert_eq!(s.train.end, s.validation.start);
        prop_assert_eq!(s.validation.end, s.test.start);
        prop_assert_eq!(s.test.end, n);
        prop_assert!(!s.train.is_empty() && !s.validation.is_empty() && !s.test.is_empty());
    }

    #[test]
    fn transfer_is_odd_and_bounded(x in -50f64..50.0) {
        let f = Transfer::Tansig;
        prop_assert_eq!(f.eval(-x), -f.eval(x));
        prop_assert!(f.eval(x).abs() <= 1.0);
    }

    #[test]
    fn r_is_affine_invariant(
        pairs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..50),
        a in 0.1f64..10.0,
        b in -5f64..5.0,
    ) {
        let (y, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-3) && t.iter().any(|v| (v - t[0]).abs() > 1e-3));
        let r = regression_r(&y, &t).unwrap();
        let ya: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let ta: Vec<f64> = t.iter().map(|v| a * v - b).collect();
        prop_assert!((regression_r(&ya, &ta).unwrap() - r).abs() < 1e-9);
        prop_assert!(r.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn divergence_is_scale_invariant(
        pairs in prop::collection::vec((1f64..10.0, 1f64..10.0), 1..50),
        c in 0.01f64..100.0,
    ) {
        let (y, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let d = max_divergence(&y, &t).unwrap();
        let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
        let tc: Vec<f64> = t.iter().map(|v| v * c).collect();
        prop_assert!((max_divergence(&yc, &tc).unwrap() - d).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn correlations_stay_in_unit_interval(
        e in prop::collection::vec(-10f64..10.0, 5..80),
        seed in any::<u64>(),
    ) {
        prop_assume!(e.iter().any(|v| (v - e[0]).abs() > 1e-6));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = series(&mut rng, e.len());
        let lag = e.len() - 1;
        let ac = error_autocorrelation(&e, lag.min(20)).unwrap();
        prop_assert_eq!(ac.values[0], 1.0);
        let xc = input_error_crosscorrelation(&x, &e, lag.min(20)).unwrap();
        for v in ac.values.iter().chain(&xc.values) {
            prop_assert!(v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn verdict_is_monotone(
        r in 0.9f64..1.0, d in 0f64..20.0, mse in 0f64..1.0,
        dr in 0f64..0.1, dd in 0f64..10.0, dm in 0f64..1.0,
    ) {
        let th = Thresholds { mse_max: Some(0.5), ..Thresholds::default() };
        let base = Metrics { mse, r_value: r, max_divergence_pct: d };
        let better = Metrics { mse: (mse - dm).max(0.0), r_value: (r + dr).min(1.0), max_divergence_pct: (d - dd).max(0.0) };
        if acceptance_verdict(&base, &th).accepted {
            prop_assert!(acceptance_verdict(&better, &th).accepted);
        }
    }
}
