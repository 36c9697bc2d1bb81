mod support;

use approx::assert_abs_diff_eq;
use attngeo::rmt::{attention_spectrum, low_rank_error, mp_kl, participation_ratio, singular_values, MarchenkoPastur, DEFAULT_BINS, DEFAULT_SMOOTHING};
use attngeo::AttentionMatrix;
use support::{low_rank_error_oracle, mp_square_cdf, mp_square_quantile, random_stochastic, rng};

#[test]
fn square_law_mass_matches_closed_form_cdf() {
    let mp = MarchenkoPastur::square();
    assert_abs_diff_eq!(mp.mass(0.0, 4.0), 1.0, epsilon = 1e-6);
    for (lo, hi) in [(0.0, 0.5), (0.5, 1.0), (1.0, 2.5), (2.5, 4.0), (0.1, 3.9)] {
        assert_abs_diff_eq!(mp.mass(lo, hi), mp_square_cdf(hi) - mp_square_cdf(lo), epsilon = 1e-6);
    }
}

#[test]
fn rectangular_laws_carry_the_atom() {
    for gamma in [0.25, 0.5, 2.0, 4.0] {
        let mp = MarchenkoPastur::new(gamma).unwrap();
        let (a, b) = mp.support();
        assert_abs_diff_eq!(mp.mass(a, b) + mp.atom(), 1.0, epsilon = 1e-3);
    }
}

#[test]
fn quantile_oracle_inverts_cdf() {
    for u in [0.01, 0.25, 0.5, 0.9, 0.999] {
        assert_abs_diff_eq!(mp_square_cdf(mp_square_quantile(u)), u, epsilon = 1e-12);
    }
    // Median of the square law, from the closed form.
    assert!(mp_square_quantile(0.5) < 1.0);
}

#[test]
fn mp_samples_are_close_to_the_law() {
    let n = 10_000;
    let samples: Vec<f64> = (0..n).map(|i| mp_square_quantile((i as f64 + 0.5) / n as f64)).collect();
    let kl = mp_kl(&samples, DEFAULT_BINS, DEFAULT_SMOOTHING).unwrap();
    assert!(kl <= 0.05, "kl {kl}");
    // A point mass at 1 is far from the law.
    let spike = vec![1.0; n];
    assert!(mp_kl(&spike, DEFAULT_BINS, DEFAULT_SMOOTHING).unwrap() > 1.0);
}

#[test]
fn low_rank_error_matches_jacobi_oracle() {
    let mut r = rng(31);
    for trial in 0..40 {
        let n = 4 + trial % 9;
        let rows = random_stochastic(&mut r, n);
        let a = AttentionMatrix::from_rows(&rows, false).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=n {
            let e = low_rank_error(&a, k).unwrap();
            assert!((e - low_rank_error_oracle(&rows, k)).abs() < 1e-7, "n {n} k {k}");
            assert!(e <= prev + 1e-15);
            prev = e;
        }
        assert_eq!(prev, 0.0);
    }
}

#[test]
fn singular_values_of_stochastic_matrix() {
    // Uniform rows have rank one with σ₁ = 1.
    let s = singular_values(&AttentionMatrix::uniform(7, false));
    assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-12);
    assert!(s[1..].iter().all(|&x| x.abs() < 1e-12));
    let id = singular_values(&AttentionMatrix::identity(5, false));
    assert!(id.iter().all(|&x| (x - 1.0).abs() < 1e-12));
}

#[test]
fn participation_ratio_extremes() {
    let u = attention_spectrum(&AttentionMatrix::uniform(9, false));
    assert_eq!(participation_ratio(&u), 1.0);
    let id = attention_spectrum(&AttentionMatrix::identity(9, false));
    assert_eq!(participation_ratio(&id), 9.0);
    let mut r = rng(32);
    for n in 3..20 {
        let a = AttentionMatrix::from_rows(&random_stochastic(&mut r, n), false).unwrap();
        let pr = participation_ratio(&attention_spectrum(&a));
        assert!((1.0..=n as f64).contains(&pr));
    }
}
