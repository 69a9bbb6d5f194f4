use num_traits::ToPrimitive;
use persist_walk::exponent::{estimate_b_tail, estimate_q, estimate_q_many, phi};
use persist_walk::montecarlo::{
    complete_excursions_by, fit_exponent, geometric_grid, half_excursion_survival, survival_a,
    survival_atilde_on_grid, CapPolicy, CurveKind, RunOptions, SurvivalCurve,
};
use persist_walk::oracle::{equivalence_check, exact_a, DpOptions};
use persist_walk::parallel::Workers;
use persist_walk::{Barrier, IncrementDistribution, Mode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

fn bar(s: &str) -> Barrier {
    s.parse().unwrap()
}

/// `P(T_a = a + 2j)` for the first hitting time of level `a` by the simple
/// walk, `j = 0..len`.
fn hitting_pmf(a: u64, len: usize) -> Vec<f64> {
    let a = a as f64;
    let mut out = Vec::with_capacity(len);
    let mut f = 0.5f64.powf(a);
    for j in 0..len {
        out.push(f);
        let j = j as f64;
        f *= (a + 2.0 * j) * (a + 2.0 * j + 1.0) / (4.0 * (j + 1.0) * (a + j + 1.0));
    }
    out
}

const TERMS: usize = 5_000_000;

/// Half-excursions after a crossing last as long as a level-2 passage, so
/// their tie probability is `Σ P(H = n)²`.
fn tie() -> f64 {
    hitting_pmf(2, TERMS).iter().map(|p| p * p).sum()
}

#[test]
fn tie_closed_forms_agree_with_direct_sum() {
    // From the origin, τ₁ = T₁ − 1 (odd hitting times give even τ₁) and
    // τ₂ is a level-2 passage; both are even.
    let t1 = hitting_pmf(1, TERMS);
    let h = hitting_pmf(2, TERMS);
    let mut tail_t1 = 1.0f64; // P(τ₁ ≥ 2m)
    let mut p = 0.0;
    for m in 0..TERMS {
        if m > 0 {
            tail_t1 -= t1[m - 1];
        }
        // τ₂ = 2 + 2m
        if m + 1 < TERMS {
            p += h[m] * (tail_t1 - t1[m]);
        }
    }
    assert!((p - (1.0 + tie()) / 4.0).abs() < 1e-3, "{p} vs {}", (1.0 + tie()) / 4.0);
}

#[test]
fn first_excursion_pair_matches_hitting_times() {
    let d = IncrementDistribution::simple();
    let target = (1.0 + tie()) / 4.0;
    let trials = 200_000;
    let c = survival_a(&d, bar("0"), Mode::Weak, 1, CapPolicy::default(), &RunOptions::new(trials, 5))
        .unwrap();
    let p = c.at(1).unwrap();
    let sigma = (target * (1.0 - target) / trials as f64).sqrt();
    assert!((p - target).abs() <= 4.0 * sigma + c.capped as f64 / trials as f64, "{p} vs {target}");

    let b = exact_a(&d, bar("0"), 1, 40, Mode::Weak, DpOptions::default()).unwrap();
    assert!(b.lower.to_f64().unwrap() <= target && target <= b.upper.to_f64().unwrap());
}

#[test]
fn stationary_one_step_negativity() {
    let d = IncrementDistribution::simple();
    let target = (1.0 - tie()) / 2.0;
    let q = estimate_q(&d, bar("0"), 1, &RunOptions::new(200_000, 6));
    assert!((q.q_hat - target).abs() <= 4.0 * q.stderr, "{} vs {target}", q.q_hat);
}

#[test]
fn half_excursion_tail_is_inverse_square_root() {
    let d = IncrementDistribution::simple();
    let c = half_excursion_survival(&d, 10_000, &RunOptions::new(100_000, 7));
    for (&n, &p) in c.horizons.iter().zip(&c.p_hat) {
        if (100..=10_000).contains(&n) {
            let s = p * (n as f64).sqrt();
            assert!((0.5..=1.1).contains(&s), "n={n}: {s}");
        }
    }
}

#[test]
fn excursion_count_grows_like_square_root() {
    let d = IncrementDistribution::simple();
    let opts = RunOptions::new(10_000, 8);
    let medians: Vec<f64> = [1_000u64, 10_000, 100_000]
        .iter()
        .map(|&t| {
            let mut n = complete_excursions_by(&d, t, &opts);
            n.sort_unstable();
            n[n.len() / 2] as f64
        })
        .collect();
    for w in medians.windows(2) {
        let growth = w[1] / w[0] / 10f64.sqrt();
        assert!((0.3..=3.0).contains(&growth), "{medians:?}");
    }
}

#[test]
fn exhaustive_equivalence_at_length_fourteen() {
    let report = equivalence_check(14);
    assert_eq!(report.counterexamples(), 0);
    let half = report.barriers.iter().find(|b| b.x == "1/2").unwrap();
    assert!(half.mode_sensitive_paths > 0);
    assert!(half.mode_sensitive_example.is_some());
}

#[test]
fn short_horizon_survival_matches_exact_values() {
    let d = IncrementDistribution::simple();
    let trials = 1_000_000;
    let c = survival_atilde_on_grid(&d, bar("0"), Mode::Strict, &[1, 2, 4], &RunOptions::new(trials, 9));
    for (p, exact) in c.p_hat.iter().zip([0.5, 0.5, 0.375]) {
        let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((p - exact).abs() <= 4.0 * sigma, "{p} vs {exact}");
    }
}

#[test]
fn stationary_negativity_approaches_phi() {
    let d = IncrementDistribution::simple();
    let xs = ["0", "1/4", "1/2", "3/5"].map(bar);
    let est = estimate_q_many(&d, &xs, 1_000, &RunOptions::new(20_000, 10));
    for (x, q) in xs.iter().zip(&est) {
        let target = phi(x.to_f64(), 1.0).unwrap();
        let allowance = if *x == bar("3/5") { 0.02 } else { 0.0 };
        assert!(
            (q.q_hat - target).abs() <= 3.0 * q.stderr + allowance,
            "x={x}: {} vs {target} (se {})",
            q.q_hat,
            q.stderr
        );
    }
}

#[test]
fn fit_stderr_is_calibrated() {
    let grid = geometric_grid(100_000, 2f64.powf(0.25));
    let trials = 1_000_000u64;
    let mut covered = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut alive = trials;
        let mut prev = 1.0;
        let survivors: Vec<u64> = grid
            .iter()
            .map(|&h| {
                let p = (h as f64).powf(-0.25);
                alive = Binomial::new(alive, p / prev).unwrap().sample(&mut rng);
                prev = p;
                alive
            })
            .collect();
        let c = SurvivalCurve::from_counts(CurveKind::Time, grid.clone(), survivors, trials, 0);
        let f = fit_exponent(&c, 1_000, 100_000).unwrap();
        covered += ((f.slope + 0.25).abs() < 3.0 * f.stderr) as u32;
    }
    assert!(covered >= 99, "{covered}/100");
}

#[test]
fn tail_ratio_for_simple_walk() {
    let d = IncrementDistribution::simple();
    let e = estimate_b_tail(&d, 100_000, 12, Workers::available()).unwrap();
    assert!(e.stderr > 0.0);
    assert!((e.b_hat - 1.0).abs() <= 3.0 * e.stderr, "{} ± {}", e.b_hat, e.stderr);
}

#[test]
fn tail_ratio_stderr_scales_with_sample_size() {
    let d = IncrementDistribution::simple();
    let small = estimate_b_tail(&d, 10_000, 13, Workers::available()).unwrap();
    let large = estimate_b_tail(&d, 1_000_000, 13, Workers::available()).unwrap();
    let ratio = small.stderr / large.stderr;
    assert!((5.0..=20.0).contains(&ratio), "{ratio}");
}

#[test]
fn tail_ratio_for_asymmetric_walk_is_reproducible() {
    let d = IncrementDistribution::from_json(r#"{"atoms": [[1, "2/3"], [-2, "1/3"]]}"#).unwrap();
    let a = estimate_b_tail(&d, 100_000, 14, Workers::available()).unwrap();
    let b = estimate_b_tail(&d, 100_000, 15, Workers::available()).unwrap();
    let se = a.stderr.hypot(b.stderr);
    assert!((a.b_hat - b.b_hat).abs() <= 3.0 * se, "{} vs {}", a.b_hat, b.b_hat);
}
