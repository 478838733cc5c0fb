use std::f64::consts::FRAC_1_SQRT_2;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use sparfun::coherence::{evaluate, DesignMatrix};
use sparfun::dictionary::{
    build_trig_dictionary, l2_norm_in_span, sample_a1_alpha, synthesize, Dictionary, Domain, SyntheticFunction, TrigDictionary,
};
use sparfun::functional_lab::{
    evaluate_pipeline, make_functional, modulus_constants, quadrature_resolution, rate_experiment, theoretical_constants, ClassSpec,
    Decoder, Functional, FunctionalKind, PipelineConfig, RateAxis, RateSweep, ScalarMap,
};
use sparfun::rng::trial_rng;
use sparfun::sampling::{draw_samples, exhaustive_discretization_extremes, SampleSet, LEMMA8_C1, LEMMA8_C2};
use sparfun::Error;

fn dict1(k: u32) -> TrigDictionary {
    build_trig_dictionary(Domain::unit_cube(1).unwrap(), k).unwrap()
}

/// `g` scaled to unit `L2` norm.
fn unit_g(dict: &TrigDictionary, seed: u64) -> Vec<f64> {
    let mut rng = trial_rng(seed, 9, 0);
    let g: Vec<f64> = (0..dict.len()).map(|_| rng.sample(StandardNormal)).collect();
    let norm = l2_norm_in_span(dict, &g);
    g.into_iter().map(|v| v / norm).collect()
}

fn shipped(dict: &TrigDictionary) -> Vec<Functional> {
    let g = unit_g(dict, 1);
    vec![
        make_functional(FunctionalKind::L2Norm, dict).unwrap(),
        make_functional(FunctionalKind::InnerProduct { g: g.clone() }, dict).unwrap(),
        make_functional(FunctionalKind::ScalarCompose { h: ScalarMap::abs(), g: g.clone() }, dict).unwrap(),
        make_functional(FunctionalKind::ScalarCompose { h: ScalarMap::sin(), g: g.clone() }, dict).unwrap(),
        make_functional(FunctionalKind::ScalarCompose { h: ScalarMap::pow_abs(0.5).unwrap(), g }, dict).unwrap(),
    ]
}

fn jittered_grid(m: usize, seed: u64) -> SampleSet {
    let mut rng = trial_rng(seed, 0, 0);
    let points = (0..m).map(|t| vec![(t as f64 + 0.5 + 0.3 * rng.random_range(-1.0..1.0)) / m as f64]).collect();
    SampleSet::from_points(points, seed).unwrap()
}

#[test]
fn functional_examples() {
    let dict = dict1(2);
    let l2 = make_functional(FunctionalKind::L2Norm, &dict).unwrap();
    assert_eq!(l2.eval_coeffs(&[0.0; 5]), 0.0);
    assert_abs_diff_eq!(l2.eval_coeffs(&[1.0, 0.0, 0.0, 0.0, 0.0]), FRAC_1_SQRT_2, epsilon = 1e-15);
    let via_grid = l2.eval_function(&dict, |x: &[f64]| dict.eval(0, x), quadrature_resolution(&dict));
    assert_abs_diff_eq!(via_grid, FRAC_1_SQRT_2, epsilon = 1e-14);

    let g = unit_g(&dict, 2);
    let ip = make_functional(FunctionalKind::InnerProduct { g }, &dict).unwrap();
    let (a, b) = ([0.3, -0.1, 0.0, 0.5, 0.2], [-0.7, 0.4, 0.1, 0.0, 0.9]);
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    assert_abs_diff_eq!(ip.eval_coeffs(&sum), ip.eval_coeffs(&a) + ip.eval_coeffs(&b), epsilon = 1e-15);
    assert_eq!(ip.beta(), 1.0);
}

#[test]
fn functional_contracts() {
    let dict = dict1(2);
    assert!(matches!(ScalarMap::certified("x2", |t| t * t, 1.0, 2.0), Err(Error::Contract(_))));
    assert!(matches!(ScalarMap::certified("h", |t| t, 1.5, 1.0), Err(Error::Contract(_))));
    assert!(ScalarMap::pow_abs(0.0).is_err());
    assert_eq!(ScalarMap::pow_abs(0.25).unwrap().beta(), 0.25);
    let big = vec![3.0; 5];
    assert!(matches!(make_functional(FunctionalKind::InnerProduct { g: big }, &dict), Err(Error::Contract(_))));
    assert!(matches!(make_functional(FunctionalKind::InnerProduct { g: vec![0.1] }, &dict), Err(Error::DimensionMismatch { .. })));
    let f = make_functional(FunctionalKind::ScalarCompose { h: ScalarMap::pow_abs(0.3).unwrap(), g: unit_g(&dict, 3) }, &dict).unwrap();
    assert_eq!(f.beta(), 0.3);
}

#[test]
fn coefficient_and_quadrature_evaluators_agree() {
    let dict = dict1(4);
    let w = sample_a1_alpha(&dict, 1.0, 4).unwrap().coeffs;
    for p in shipped(&dict) {
        let q = p.eval_function(&dict, |x: &[f64]| synthesize(&dict, &w, x).unwrap(), quadrature_resolution(&dict));
        assert_abs_diff_eq!(q, p.eval_coeffs(&w), epsilon = 1e-12);
    }
}

#[test]
fn modulus_constant_examples() {
    let design = DesignMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
    let (c1, c2) = modulus_constants(&design, 1, 2.0, 1.0, 1.0).unwrap();
    assert_abs_diff_eq!(c1, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
    assert_abs_diff_eq!(c1, 0.57735, epsilon = 1e-5);
    assert_abs_diff_eq!(c2, 1.0 / 3f64.sqrt(), epsilon = 1e-15);

    let one = DesignMatrix::from_matrix(DMatrix::from_row_slice(1, 1, &[2.0])).unwrap();
    let (c1, c2) = modulus_constants(&one, 1, 2.0, 1.0, 1.0).unwrap();
    assert_abs_diff_eq!(c1, 2.0, epsilon = 1e-15);
    assert_abs_diff_eq!(c2, 2.0, epsilon = 1e-15);

    // mu = 1/sqrt(2): (2s - 1) mu approaches 1 from below only for s = 1
    let tilt = DesignMatrix::from_matrix(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])).unwrap();
    let (_, c2) = modulus_constants(&tilt, 1, 2.0, 1.0, 1.0).unwrap();
    assert!(c2 > 0.0 && c2 < 1.0);
    assert!(matches!(modulus_constants(&tilt, 2, 2.0, 1.0, 1.0), Err(Error::NonContractive { .. })));
}

#[test]
fn constant_set_recomputed_independently() {
    let dict = dict1(16);
    assert_eq!(dict.len(), 33);
    let samples = jittered_grid(64, 5);
    let design = DesignMatrix::from_dictionary(&dict, &samples).unwrap();
    let (p, m, nf, s, b, j, beta) = (2.0, 64.0f64, 33.0f64, 2usize, 1.0, 20usize, 0.5);

    let raw = evaluate(&dict, &samples).unwrap();
    let energies: Vec<f64> = raw.column_iter().map(|c| c.norm_squared()).collect();
    let c0 = energies.iter().map(|e| 1.0 / e.sqrt()).fold(0.0, f64::max);
    let l_inv = energies.iter().map(|e| e.sqrt()).fold(0.0, f64::max);
    let mut mu: f64 = 0.0;
    for a in 0..33 {
        for c in 0..a {
            let dot = raw.column(a).dot(&raw.column(c)).abs() / (energies[a] * energies[c]).sqrt();
            mu = mu.max(dot);
        }
    }
    assert!(3.0 * mu < 1.0, "jittered grid too coherent: {mu}");
    let rho = 3.0 * mu;
    let c_geom = 4.0 * (0..=j).map(|i| rho.powi(i as i32)).sum::<f64>();
    let k = 5f64.sqrt();
    let c3 = 2f64.sqrt() * (1.0 + 2.0 * k) + 2f64.sqrt() * 2.0 * (2.0 + 2.0 * k);
    let c4 = 6.0 * c0 * b * m * 2.0 * nf.sqrt();
    let c6 = c0 * c_geom * 2f64.sqrt() * m * nf.sqrt();
    let c7 = 12.0 * 2.0 * m.sqrt() * b * 2.0;
    let c8 = 2f64.powf(1.5) * c_geom * 2.0 * m.sqrt() + c3;
    let b_bar = c4 + c6 * b + 6.0 * b * m * c0;
    let c1t = 2.0 / m.sqrt() * l_inv * (1.0 + rho).sqrt();
    let c2t = (1.0 - rho).sqrt() / (m.sqrt() * 1.5 * c0);
    let p0 = 0.25;
    let cp = p0 + (nf * b_bar).sqrt();
    let c9 = (c1t.sqrt() + cp) * (1.0 + 2f64.sqrt() * b_bar.sqrt());

    let t = theoretical_constants(p, b, s, &design, j, LEMMA8_C1, LEMMA8_C2, beta, -p0).unwrap();
    let close = |a: f64, e: f64| (a - e).abs() <= 1e-10 * e.abs().max(1.0);
    assert_eq!((t.m, t.n, t.s, t.j), (64, 33, 2, 20));
    assert_eq!(t.c_mp, 1.0);
    for (name, got, want) in [
        ("mu", t.mu, mu),
        ("rho", t.rho, rho),
        ("c0", t.c0, c0),
        ("C", t.c_geom, c_geom),
        ("C3", t.c3, c3),
        ("C4", t.c4, c4),
        ("C5", t.c5, -rho.ln()),
        ("C6", t.c6, c6),
        ("C7", t.c7, c7),
        ("C8", t.c8, c8),
        ("B_bar", t.b_bar, b_bar),
        ("c1_tilde", t.c1_tilde, c1t),
        ("c2_tilde", t.c2_tilde, c2t),
        ("C_P", t.c_p_bound, cp),
        ("C9", t.c9, c9),
    ] {
        assert!(close(got, want), "{name}: {got} vs {want}");
    }
    assert_abs_diff_eq!(t.composite_bound(0.01), c7 * rho.powi(20) + c8 * 0.01, epsilon = 1e-9);
    assert!(t.c5 > 0.0);
}

#[test]
fn geometric_constant_limit() {
    let design = DesignMatrix::from_matrix(DMatrix::identity(4, 4) + DMatrix::from_element(4, 4, 0.05)).unwrap();
    let t = theoretical_constants(2.0, 1.0, 2, &design, 3000, 0.25, 2.25, 1.0, 0.0).unwrap();
    assert_abs_diff_eq!(t.c_geom, 4.0 / (1.0 - t.rho), epsilon = 1e-10);
    let tilt = DesignMatrix::from_matrix(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])).unwrap();
    assert!(matches!(theoretical_constants(2.0, 1.0, 2, &tilt, 3, 0.25, 2.25, 1.0, 0.0), Err(Error::NonContractive { .. })));
}

fn exact_cfg(s: usize, iterations: usize) -> PipelineConfig {
    PipelineConfig { s, iterations, delta: None, schedule_bound: None, decoder: Decoder::ExactComposition }
}

#[test]
fn pipeline_on_zero_function() {
    let dict = dict1(3);
    let p = make_functional(FunctionalKind::L2Norm, &dict).unwrap();
    let f = SyntheticFunction::custom(vec![0.0; 7]);
    let samples = draw_samples(dict.domain(), 30, 1).unwrap();
    let r = evaluate_pipeline(&p, &f, &dict, &samples, &exact_cfg(1, 5)).unwrap();
    assert_eq!(r.code.nnz(), 0);
    assert_eq!(r.p_hat, 0.0);
    assert_eq!(r.abs_error, 0.0);
    assert_eq!(r.l2_error, 0.0);
}

#[test]
fn pipeline_exact_recovery_on_full_grid() {
    let dict = dict1(3);
    let grid = SampleSet::uniform_grid(dict.domain(), 16);
    let f = SyntheticFunction::custom(vec![0.0, 0.5, 0.0, 0.0, -0.3, 0.0, 0.0]);
    let cfg = PipelineConfig { delta: Some(0.0), ..exact_cfg(2, 1) };
    for p in shipped(&dict) {
        let r = evaluate_pipeline(&p, &f, &dict, &grid, &cfg).unwrap();
        assert!(r.l2_error <= 1e-12);
        assert!(r.abs_error <= 1e-6, "{}", r.abs_error);
        assert!(r.valid && r.discretization.exhaustive);
    }
}

#[test]
fn pipeline_holder_step_and_composite_bound() {
    let dict = dict1(5);
    let mut valid = 0;
    for t in 0..20 {
        let f = sample_a1_alpha(&dict, 1.0, 40 + t).unwrap();
        let samples = draw_samples(dict.domain(), 120, t).unwrap();
        for p in shipped(&dict) {
            let r = evaluate_pipeline(&p, &f, &dict, &samples, &exact_cfg(1, 15)).unwrap();
            assert!(r.abs_error <= r.holder_bound + 1e-10);
            assert_abs_diff_eq!(r.p_hat, r.p_fs_quadrature, epsilon = 1e-10);
            assert!(r.code.nnz() <= 1);
            if r.valid {
                valid += 1;
                assert!(r.l2_error <= r.composite_bound);
            }
        }
    }
    assert!(valid > 0);
}

#[test]
fn pipeline_with_taylor_decoder() {
    let dict = dict1(1);
    let p = make_functional(FunctionalKind::L2Norm, &dict).unwrap();
    let f = SyntheticFunction::custom(vec![0.6, 0.0, 0.2]);
    let samples = draw_samples(dict.domain(), 40, 3).unwrap();
    let cfg = PipelineConfig { decoder: Decoder::LocalizedTaylor { n_cells: 4 }, ..exact_cfg(1, 10) };
    let r = evaluate_pipeline(&p, &f, &dict, &samples, &cfg).unwrap();
    let dec = r.decoder.expect("decoder report");
    assert!(dec.active_cells > 0);
    assert!(dec.rescale_inflation > 1.0);
    assert!(dec.decoder_error.is_finite() && r.p_hat.is_finite());
    assert_abs_diff_eq!(dec.scaled_bound, r.constants.c9 * dec.taylor_bound, epsilon = 1e-9 * dec.scaled_bound);
}

#[test]
fn rate_tables_have_one_row_per_value() {
    let dict = dict1(20);
    let class = ClassSpec::A1Alpha { alpha: 1.0 };
    for (axis, values) in [
        (RateAxis::Sparsity, vec![1, 2, 4]),
        (RateAxis::Iterations, vec![0, 5, 10, 20]),
        (RateAxis::Samples, vec![50, 100]),
    ] {
        let sweep = RateSweep { axis, values: values.clone(), m: 150, s: 1 };
        let table = rate_experiment(&class, &dict, &sweep, 1, 3).unwrap();
        assert_eq!(table.rows.len(), values.len());
        assert_eq!(table.axis, axis);
        assert!(table.rows.iter().all(|r| r.std_error == 0.0));
    }
    let sweep = RateSweep { axis: RateAxis::Sparsity, values: vec![1], m: 10, s: 1 };
    assert!(rate_experiment(&class, &dict, &sweep, 0, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn holder_certificate(seed in any::<u64>()) {
        let dict = dict1(3);
        let functionals = shipped(&dict);
        let mut rng = trial_rng(seed, 0, 0);
        for _ in 0..200 {
            let a: Vec<f64> = (0..7).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Vec<f64> = (0..7).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let dist = l2_norm_in_span(&dict, &diff);
            for p in &functionals {
                prop_assert!((p.eval_coeffs(&a) - p.eval_coeffs(&b)).abs() <= dist.powf(p.beta()) + 1e-10);
            }
        }
    }

    #[test]
    fn modulus_transfer(seed in any::<u64>()) {
        let dict = dict1(4);
        let s = 2;
        let samples = draw_samples(dict.domain(), 80, seed).unwrap();
        let design = DesignMatrix::from_dictionary(&dict, &samples).unwrap();
        prop_assume!((2.0 * s as f64 - 1.0) * design.mu() < 1.0);
        let (lo, _) = exhaustive_discretization_extremes(design.entries(), dict.gamma(), s).unwrap();
        prop_assume!(lo >= LEMMA8_C1);
        let (c1t, _) = modulus_constants(&design, s, 2.0, LEMMA8_C1, LEMMA8_C2).unwrap();
        let mut rng = trial_rng(seed, 1, 0);
        let n = dict.len();
        let sparse = |rng: &mut _| {
            let mut w = vec![0.0; n];
            for i in index::sample(rng, n, s).iter() {
                w[i] = rand::Rng::sample::<f64, _>(rng, StandardNormal);
            }
            w
        };
        for p in shipped(&dict) {
            for _ in 0..25 {
                let (w1, w2) = (sparse(&mut rng), sparse(&mut rng));
                let l2: f64 = w1.iter().zip(&w2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!((p.eval_coeffs(&w1) - p.eval_coeffs(&w2)).abs() <= c1t.powf(p.beta()) * l2.powf(p.beta()) + 1e-9);
            }
        }
    }
}
