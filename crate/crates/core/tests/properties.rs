use evalign::align::kendall_tau;
use evalign::downstream::{expected_profit, newsvendor_bayes_act, NewsvendorParams};
use evalign::monotone::{AlignmentNet, BaseActivation, HKind, NetConfig};
use evalign::scoring::{crps, twcrps, ChainingSpec};
use proptest::prelude::*;

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..40)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let sx = (x[i] - x[j]).signum() * ((x[i] != x[j]) as i32 as f64);
            let sy = (y[i] - y[j]).signum() * ((y[i] != y[j]) as i32 as f64);
            match (sx == 0.0, sy == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                _ if sx == sy => c += 1,
                _ => d += 1,
            }
        }
    }
    let n0 = (c + d + tx) as f64 * (c + d + ty) as f64;
    if n0 == 0.0 {
        f64::NAN
    } else {
        (c - d) as f64 / n0.sqrt()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn crps_is_nonnegative(xs in samples(), y in -60.0f64..60.0) {
        prop_assert!(crps(&xs, y).unwrap() >= -1e-12);
    }

    #[test]
    fn crps_ignores_sample_order(mut xs in samples(), y in -60.0f64..60.0, seed in any::<u64>()) {
        let a = crps(&xs, y).unwrap();
        let n = xs.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            xs.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert!(close(a, crps(&xs, y).unwrap(), 1e-12));
    }

    #[test]
    fn crps_translates_and_scales(xs in samples(), y in -60.0f64..60.0, shift in -20.0f64..20.0, k in 0.1f64..10.0) {
        let a = crps(&xs, y).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| k * x + shift).collect();
        prop_assert!(close(k * a, crps(&moved, k * y + shift).unwrap(), 1e-10));
    }

    #[test]
    fn twcrps_is_crps_of_mapped_values(xs in samples(), y in -60.0f64..60.0, t in -30.0f64..30.0, w in 0.5f64..30.0) {
        for spec in [
            ChainingSpec::threshold(t),
            ChainingSpec::interval(t, t + w).unwrap(),
            ChainingSpec::gaussian(t, t, w).unwrap(),
        ] {
            let mapped: Vec<f64> = xs.iter().map(|&x| spec.eval(x)).collect();
            let direct = twcrps(&xs, y, &spec).unwrap();
            prop_assert!(close(direct, crps(&mapped, spec.eval(y)).unwrap(), 1e-12));
            prop_assert!(direct >= -1e-12);
        }
    }

    #[test]
    fn kendall_matches_pairwise_count(
        pairs in prop::collection::vec((0u8..6, 0u8..6), 2..60),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let brute = brute_tau(&x, &y);
        match kendall_tau(&x, &y) {
            Ok(tau) => prop_assert!((tau - brute).abs() < 1e-12, "{tau} vs {brute}"),
            Err(_) => prop_assert!(brute.is_nan()),
        }
    }

    #[test]
    fn bayes_act_maximizes_sample_profit(xs in prop::collection::vec(0.0f64..100.0, 1..30), p in 1.0f64..10.0, frac in 0.05f64..0.95, h in 0.0f64..5.0) {
        let params = NewsvendorParams::new(p, p * frac, h).unwrap();
        let act = newsvendor_bayes_act(&xs, &params).unwrap();
        let best = expected_profit(act, &xs, &params).unwrap();
        for &a in &xs {
            prop_assert!(best >= expected_profit(a, &xs, &params).unwrap() - 1e-9);
        }
    }

    #[test]
    fn learned_nu_is_nondecreasing(seed in any::<u64>(), gelu in any::<bool>(), monotone_h in any::<bool>()) {
        let cfg = NetConfig {
            activation: if gelu { BaseActivation::Gelu } else { BaseActivation::Relu },
            h_kind: if monotone_h { HKind::Monotone } else { HKind::Affine },
            ..NetConfig::default()
        };
        let net = AlignmentNet::<f64>::new(cfg, seed).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| -20.0 + 0.1 * i as f64).collect();
        for w in grid.windows(2) {
            prop_assert!(net.nu(w[1]) >= net.nu(w[0]) - 1e-12);
            prop_assert!(net.output_map(w[1]) >= net.output_map(w[0]) - 1e-12);
        }
    }
}
