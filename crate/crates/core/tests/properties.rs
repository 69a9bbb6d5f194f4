use persist_walk::montecarlo::{binomial_interval, survival_a, survival_atilde, CapPolicy, RunOptions};
use persist_walk::{Barrier, IncrementDistribution, Mode};
use proptest::prelude::*;

fn dists() -> impl Strategy<Value = IncrementDistribution> {
    prop_oneof![
        Just(IncrementDistribution::simple()),
        Just(IncrementDistribution::from_json(r#"{"atoms": [[1, "2/3"], [-2, "1/3"]]}"#).unwrap()),
        Just(IncrementDistribution::from_json(r#"{"atoms": [[2, "1/4"], [-1, "1/2"], [0, "1/4"]]}"#).unwrap()),
    ]
}

fn barriers() -> impl Strategy<Value = Barrier> {
    (0i64..8).prop_map(|p| Barrier::new(p, 8).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn survival_is_monotone(d in dists(), x in barriers(), seed in any::<u64>(), weak in any::<bool>()) {
        let mode = if weak { Mode::Weak } else { Mode::Strict };
        let c = survival_atilde(&d, x, mode, 2_000, &RunOptions::new(3_000, seed));
        prop_assert!(c.survivors.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(c.p_hat.windows(2).all(|w| w[0] >= w[1]));
        let a = survival_a(&d, x, Mode::Weak, 50, CapPolicy::default(), &RunOptions::new(1_000, seed)).unwrap();
        prop_assert!(a.survivors.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn interval_brackets_estimate(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).round() as u64;
        let (lo, hi) = binomial_interval(s, n);
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0, "{lo} {p} {hi}");
    }

    #[test]
    fn worker_count_does_not_change_counts(d in dists(), x in barriers(), seed in any::<u64>()) {
        let run = |w| survival_atilde(&d, x, Mode::Strict, 500, &RunOptions::new(5_000, seed).workers(w));
        let one = run(1);
        prop_assert_eq!(&one.survivors, &run(4).survivors);
        prop_assert_eq!(&one.survivors, &run(16).survivors);
        let a = |w| survival_a(&d, x, Mode::Weak, 20, CapPolicy::default(), &RunOptions::new(3_000, seed).workers(w)).unwrap();
        prop_assert_eq!(a(1).survivors, a(16).survivors);
    }
}
