use persist_walk::parallel::Workers;
use persist_walk::stable::{
    combine_difference, combine_sum, ks_two_sample, negativity_probability, quantile, sample_n,
    StableParams,
};

const N: u64 = 1_000_000;

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

fn draws(kappa: f64, scale: f64, seed: u64) -> Vec<f64> {
    sample_n(&StableParams::new(kappa, scale).unwrap(), N, seed, Workers::available())
}

#[test]
fn sum_of_two_one_sided_draws_is_four_times_one() {
    let law = combine_sum(1.0, 1.0).unwrap();
    assert_eq!(law.multiplier(), 4.0);
    let (a, b) = (draws(1.0, 1.0, 11), draws(1.0, 1.0, 12));
    let sum = sorted(a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let scaled = sorted(draws(1.0, 1.0, 13).into_iter().map(|z| 4.0 * z).collect());
    let d = ks_two_sample(&sum, &scaled);
    assert!(d < 0.005, "KS {d}");
}

#[test]
fn scale_multiplies_the_median_by_its_square() {
    // Median of the standard one-sided law is 1 / (2 erfc^{-1}(1/2)^2) ≈ 2.198.
    let s = sorted(draws(1.0, 2.0, 21));
    let m = quantile(&s, 0.5);
    assert!((m / 4.0 - 2.198).abs() < 0.03, "median {m}");
}

#[test]
fn weighted_difference_has_predicted_negativity() {
    let law = combine_difference(0.4, 1.6).unwrap();
    assert!((law.kappa() + 1.0 / 3.0).abs() < 1e-12);
    let exact = negativity_probability(law.kappa()).unwrap();
    assert!((exact - 0.7048).abs() < 1e-4);
    let (a, b) = (draws(1.0, 1.0, 31), draws(1.0, 1.0, 32));
    let neg = a.iter().zip(&b).filter(|(x, y)| 0.4 * *x - 1.6 * *y < 0.0).count() as f64 / N as f64;
    let sigma = (exact * (1.0 - exact) / N as f64).sqrt();
    assert!((neg - exact).abs() <= 3.0 * sigma, "{neg} vs {exact}");
}

#[test]
fn empirical_characteristic_function() {
    for (kappa, scale, seed) in [(1.0 / 3.0, 1.5, 41), (-1.0, 0.7, 42), (0.0, 1.0, 43)] {
        let p = StableParams::new(kappa, scale).unwrap();
        let z = draws(kappa, scale, seed);
        for t in [0.5, 1.0, 2.0] {
            let (re, im) = z.iter().fold((0.0, 0.0), |(r, i), &v| (r + (t * v).cos(), i + (t * v).sin()));
            let (re, im) = (re / N as f64, im / N as f64);
            let (er, ei) = p.characteristic(t);
            let tol = 5.0 / (N as f64).sqrt();
            assert!((re - er).abs() < tol && (im - ei).abs() < tol, "kappa {kappa} t {t}: ({re}, {im}) vs ({er}, {ei})");
        }
    }
}

#[test]
fn negativity_is_decreasing_onto_unit_interval() {
    assert_eq!(negativity_probability(-1.0).unwrap(), 1.0);
    assert_eq!(negativity_probability(1.0).unwrap(), 0.0);
    let mut prev = f64::INFINITY;
    for i in 0..=200 {
        let p = negativity_probability(-1.0 + i as f64 / 100.0).unwrap();
        assert!(p < prev);
        prev = p;
    }
}
