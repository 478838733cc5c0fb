use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;
use sparfun::coherence::evaluate;
use sparfun::dictionary::{build_trig_dictionary, l2_norm_in_span, sample_a1_alpha, Dictionary, Domain, TrigDictionary};
use sparfun::rng::trial_rng;
use sparfun::s_term_oracle::{
    best_s_term_exhaustive, estimator_bound_constant, omp, sigma_bound_a1alpha, sigma_s_l2_orthogonal, sigma_s_tail_bound,
    top_s_support,
};
use sparfun::sampling::{draw_samples, exhaustive_discretization_extremes, SampleSet};
use sparfun::Error;

fn dict1(k: u32) -> TrigDictionary {
    build_trig_dictionary(Domain::unit_cube(1).unwrap(), k).unwrap()
}

fn values(d: &DMatrix<f64>, c: &[f64]) -> Vec<f64> {
    (d * DVector::from_column_slice(c)).iter().copied().collect()
}

#[test]
fn identity_example() {
    let d = DMatrix::<f64>::identity(3, 3);
    let y = [1.0, 0.5, 0.1];
    let best = best_s_term_exhaustive(&d, &y, 2, 2.0).unwrap();
    assert_eq!(best.support, vec![0, 1]);
    for (a, e) in best.code.w.iter().zip([1.0, 0.5, 0.0]) {
        assert_abs_diff_eq!(*a, e, epsilon = 1e-14);
    }
    assert_abs_diff_eq!(best.empirical_residual, 0.1 / 3f64.sqrt(), epsilon = 1e-14);
    assert_abs_diff_eq!(best.empirical_residual, 0.05774, epsilon = 1e-5);
    let greedy = omp(&d, &y, 2).unwrap();
    assert_eq!(greedy.support, best.support);
    assert_abs_diff_eq!(greedy.empirical_residual, best.empirical_residual, epsilon = 1e-14);
}

#[test]
fn exact_representations() {
    let mut rng = trial_rng(3, 0, 0);
    let d = DMatrix::from_fn(6, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut c = vec![0.0; 8];
    c[2] = 1.5;
    c[6] = -0.4;
    let best = best_s_term_exhaustive(&d, &values(&d, &c), 2, 2.0).unwrap();
    assert!(best.empirical_residual <= 1e-12);
    assert_eq!(best.support, vec![2, 6]);

    let square = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = [0.3, -1.0, 2.0, 0.7];
    assert!(best_s_term_exhaustive(&square, &y, 4, 2.0).unwrap().empirical_residual <= 1e-12);
}

#[test]
fn omp_with_zero_budget() {
    let d = DMatrix::<f64>::identity(4, 4);
    let y = [1.0, -2.0, 0.0, 2.0];
    let r = omp(&d, &y, 0).unwrap();
    assert_eq!(r.code.nnz(), 0);
    assert_abs_diff_eq!(r.empirical_residual, (9.0f64 / 4.0).sqrt(), epsilon = 1e-15);
    // ties between columns 1 and 3 resolve to the lower index
    assert_eq!(omp(&d, &y, 1).unwrap().support, vec![1]);
}

#[test]
fn guards_and_contracts() {
    let d = DMatrix::<f64>::identity(3, 3);
    assert!(matches!(best_s_term_exhaustive(&d, &[1.0, 0.0, 0.0], 1, 1.0), Err(Error::Unsupported(_))));
    assert!(matches!(best_s_term_exhaustive(&d, &[1.0], 1, 2.0), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(best_s_term_exhaustive(&d, &[1.0, 0.0, 0.0], 4, 2.0), Err(Error::Sparsity { .. })));
    let wide = DMatrix::<f64>::zeros(2, 100);
    assert!(matches!(best_s_term_exhaustive(&wide, &[1.0, 0.0], 5, 2.0), Err(Error::TooLarge { .. })));
}

#[test]
fn rank_deficient_support_uses_minimum_norm() {
    let d = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
    let r = best_s_term_exhaustive(&d, &[2.0, 0.0], 2, 2.0).unwrap();
    assert_abs_diff_eq!(r.code.w[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(r.code.w[1], 1.0, epsilon = 1e-12);
}

#[test]
fn tail_examples() {
    assert_abs_diff_eq!(sigma_s_tail_bound(&[0.6, 0.3, 0.1], 2), 0.1, epsilon = 1e-15);
    assert_eq!(sigma_s_tail_bound(&[0.6, 0.0, -0.1], 2), 0.0);
    assert_abs_diff_eq!(sigma_s_tail_bound(&[0.6, -0.3, 0.1], 0), 1.0, epsilon = 1e-15);
    assert_eq!(top_s_support(&[0.2, -0.5, 0.2, 0.1], 2), vec![0, 1]);
    assert_abs_diff_eq!(sigma_s_l2_orthogonal(&[0.6, 0.3, 0.1], 1, 0.5), (0.5f64 * 0.1).sqrt(), epsilon = 1e-15);
}

#[test]
fn a1alpha_sigma_bound() {
    assert_abs_diff_eq!(sigma_bound_a1alpha(2.0, 4, 0.0).unwrap(), 0.03125, epsilon = 1e-15);
    assert_abs_diff_eq!(sigma_bound_a1alpha(2.0, 1, 0.01).unwrap(), 1.01, epsilon = 1e-15);
    assert!((sigma_bound_a1alpha(2.0, 1_000_000, 0.2).unwrap() - 0.2).abs() < 1e-12);
    assert!(sigma_bound_a1alpha(2.0, 0, 0.0).is_err());
}

#[test]
fn estimator_constant() {
    let k = 5f64.sqrt();
    let expect = 2f64.sqrt() * (1.0 + 2.0 * k) + 2f64.sqrt() * 2.0 * (2.0 + 2.0 * k);
    assert_abs_diff_eq!(estimator_bound_constant(2.0, 0.25).unwrap(), expect, epsilon = 1e-12);
    assert_abs_diff_eq!(expect, 26.0447, epsilon = 1e-4);
    let at_one = estimator_bound_constant(2.0, 1.0).unwrap();
    for c1 in [0.1, 0.3, 0.5, 0.9] {
        assert!(estimator_bound_constant(2.0, c1).unwrap() > at_one);
    }
    let big = estimator_bound_constant(1e9, 1.0).unwrap();
    assert_abs_diff_eq!(big, 1.0 + 2.0 + 2.0 + 2.0, epsilon = 1e-6);
    assert!(estimator_bound_constant(2.0, 0.0).is_err());
    assert!(estimator_bound_constant(2.0, 1.5).is_err());
}

#[test]
fn full_grid_picks_top_coefficients() {
    let dict = dict1(3);
    let d = evaluate(&dict, &SampleSet::uniform_grid(dict.domain(), 16)).unwrap();
    for seed in 0..20 {
        let f = sample_a1_alpha(&dict, 1.0, seed).unwrap();
        let y = values(&d, &f.coeffs);
        for s in 1..=3 {
            let best = best_s_term_exhaustive(&d, &y, s, 2.0).unwrap();
            assert_eq!(best.support, top_s_support(&f.coeffs, s));
            assert_eq!(omp(&d, &y, s).unwrap().support, best.support);
        }
    }
}

#[test]
fn full_bound_on_passing_sample_sets() {
    let dict = dict1(4);
    let cp = estimator_bound_constant(2.0, 0.25).unwrap();
    let mut checked = 0;
    for seed in 0..30 {
        let samples = draw_samples(dict.domain(), 60, seed).unwrap();
        let d = evaluate(&dict, &samples).unwrap();
        let s = 2;
        let (lo, hi) = exhaustive_discretization_extremes(&d, dict.gamma(), s).unwrap();
        if lo < 0.25 || hi > 2.25 {
            continue;
        }
        checked += 1;
        let f = sample_a1_alpha(&dict, 1.0, 100 + seed).unwrap();
        let best = best_s_term_exhaustive(&d, &values(&d, &f.coeffs), s, 2.0).unwrap();
        let diff: Vec<f64> = f.coeffs.iter().zip(&best.code.w).map(|(a, b)| a - b).collect();
        assert!(l2_norm_in_span(&dict, &diff) <= cp * sigma_s_tail_bound(&f.coeffs, s));
    }
    assert!(checked > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exhaustive_beats_omp(seed in any::<u64>(), m in 3usize..8, n in 3usize..9, s in 1usize..3) {
        let mut rng = trial_rng(seed, 0, 0);
        let d = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let best = best_s_term_exhaustive(&d, &y, s, 2.0).unwrap();
        let greedy = omp(&d, &y, s).unwrap();
        prop_assert!(best.empirical_residual >= 0.0);
        prop_assert!(best.empirical_residual <= greedy.empirical_residual + 1e-12);
        prop_assert!(best.code.nnz() <= s);
    }

    #[test]
    fn sampled_residual_within_tail(seed in any::<u64>(), s in 1usize..4) {
        let dict = dict1(3);
        let f = sample_a1_alpha(&dict, 0.5, seed).unwrap();
        let samples = draw_samples(dict.domain(), 12, seed ^ 1).unwrap();
        let d = evaluate(&dict, &samples).unwrap();
        let best = best_s_term_exhaustive(&d, &values(&d, &f.coeffs), s, 2.0).unwrap();
        prop_assert!(best.empirical_residual <= 2f64.sqrt() * sigma_s_tail_bound(&f.coeffs, s) + 1e-12);
    }

    #[test]
    fn sigma_monotone(c in prop::collection::vec(-1.0f64..1.0, 1..12)) {
        let n = c.len();
        for s in 0..n {
            prop_assert!(sigma_s_tail_bound(&c, s + 1) <= sigma_s_tail_bound(&c, s) + 1e-15);
            prop_assert!(sigma_s_l2_orthogonal(&c, s + 1, 0.5) <= sigma_s_l2_orthogonal(&c, s, 0.5) + 1e-15);
        }
        prop_assert_eq!(sigma_s_tail_bound(&c, n), 0.0);
    }
}
